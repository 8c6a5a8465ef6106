#include <cmath>
#include <cstdio>
#include <doctest.h>
#include <filesystem>
#include <fstream>

#include "reidkit/model.hpp"
#include "reidkit/rng.hpp"

using namespace reidkit;

namespace {

Tensor random_images(std::size_t n, const BackboneConfig& cfg, std::uint64_t seed,
                     double scale = 1.0) {
    Rng rng(mix_seed(seed));
    Tensor t = Tensor::zeros({n, cfg.in_channels, cfg.in_height, cfg.in_width});
    for (double& v : t.values()) v = scale * rng.uniform(-1.0, 1.0);
    return t;
}

BackboneConfig small_config() {
    BackboneConfig cfg;
    cfg.in_channels = 1;
    cfg.in_height = 16;
    cfg.in_width = 16;
    cfg.blocks = {{4}, {8}};
    cfg.feature_dim = 8;  // equals the last channel count: no embed layer
    return cfg;
}

}  // namespace

TEST_CASE("neck wiring: Neck3 has f_t == f_i and logits") {
    Model model(small_config(), NeckVariant::Neck3, 5, 1);
    NeckOutput out = model.forward(random_images(3, small_config(), 2), RunMode::Eval);
    CHECK(out.f_t.values() == out.f_i.values());
    CHECK(out.has_logits());
    CHECK(out.logits().shape() == std::vector<std::size_t>{3, 5});
}

TEST_CASE("neck wiring: Neck2 and BNNeck2 refuse logits") {
    Model neck2(small_config(), NeckVariant::Neck2, 5, 1);
    NeckOutput out = neck2.forward(random_images(2, small_config(), 3), RunMode::Eval);
    CHECK_FALSE(out.has_logits());
    CHECK_THROWS_AS(out.logits(), ConfigError);

    Model bnneck2(small_config(), NeckVariant::BNNeck2, 5, 1);
    NeckOutput out2 = bnneck2.forward(random_images(2, small_config(), 3), RunMode::Eval);
    CHECK_THROWS_AS(out2.logits(), ConfigError);
}

TEST_CASE("neck wiring: BNNeck with identity BN parameters gives f_i == f_t in eval") {
    Model model(small_config(), NeckVariant::BNNeck, 5, 1);
    BNState& bn = model.neck_bn();
    bn.eps = 0.0;  // running stats are (0, 1) at init
    NeckOutput out = model.forward(random_images(4, small_config(), 4), RunMode::Eval);
    for (std::size_t i = 0; i < out.f_t.numel(); ++i)
        CHECK(out.f_i.values()[i] == doctest::Approx(out.f_t.values()[i]).epsilon(1e-12));
}

TEST_CASE("BNNeck train-mode f_i is batch-normalized per feature") {
    BackboneConfig cfg = small_config();
    cfg.conv_bias = false;  // keep features positively homogeneous in the input
    Model model(cfg, NeckVariant::BNNeck, 5, 7);
    // large input scale makes the pre-BN variance >> eps
    NeckOutput out = model.forward(random_images(16, cfg, 5, 1000.0), RunMode::Train);
    const std::size_t n = out.f_i.dim(0), d = out.f_i.dim(1);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += out.f_i.values()[i * d + j];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double diff = out.f_i.values()[i * d + j] - mean;
            var += diff * diff;
        }
        var /= static_cast<double>(n);
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("last_stride 2 -> 1 doubles both final extents: 4x4 becomes 8x8") {
    BackboneConfig cfg;
    cfg.in_channels = 1;
    cfg.in_height = 32;
    cfg.in_width = 32;
    cfg.blocks = {{4}, {4}, {4}};
    cfg.feature_dim = 4;

    cfg.last_stride = 2;
    CHECK(final_spatial(cfg) == std::pair<std::size_t, std::size_t>{4, 4});
    const std::size_t params_s2 = count_params(cfg, NeckVariant::Neck1, 3);
    Model a(cfg, NeckVariant::Neck1, 3, 1);

    cfg.last_stride = 1;
    CHECK(final_spatial(cfg) == std::pair<std::size_t, std::size_t>{8, 8});
    CHECK(count_params(cfg, NeckVariant::Neck1, 3) == params_s2);
    Model b(cfg, NeckVariant::Neck1, 3, 1);

    CHECK_NOTHROW(a.forward(random_images(1, cfg, 2), RunMode::Eval));
    CHECK_NOTHROW(b.forward(random_images(1, cfg, 2), RunMode::Eval));
}

TEST_CASE("count_params is independent of last_stride") {
    BackboneConfig cfg;
    cfg.blocks = {{16}, {32}, {64}};
    cfg.in_channels = 3;
    cfg.feature_dim = 64;
    cfg.last_stride = 1;
    const std::size_t with_stride1 = count_params(cfg, NeckVariant::BNNeck, 100);
    cfg.last_stride = 2;
    CHECK(count_params(cfg, NeckVariant::BNNeck, 100) == with_stride1);
}

TEST_CASE("count_params: zero-block config is the classifier head alone") {
    BackboneConfig cfg;
    cfg.blocks = {};
    cfg.in_channels = 6;
    cfg.feature_dim = 6;  // matches the input channels: no embed layer
    CHECK(count_params(cfg, NeckVariant::Neck1, 10) == 6 * 10);
}

TEST_CASE("count_params: one 3x3 conv 1->8 without bias is 72 weights plus head") {
    BackboneConfig cfg;
    cfg.blocks = {{8}};
    cfg.in_channels = 1;
    cfg.conv_bias = false;
    cfg.feature_dim = 8;
    const std::size_t total = count_params(cfg, NeckVariant::Neck1, 10);
    CHECK(total == 72 + 8 * 10);
}

TEST_CASE("count_params matches the tensors a model actually owns") {
    BackboneConfig cfg;
    cfg.blocks = {{6}, {12}};
    cfg.in_channels = 2;
    cfg.in_height = 16;
    cfg.in_width = 16;
    cfg.feature_dim = 5;  // != 12: embed layer present
    for (NeckVariant v : {NeckVariant::Neck1, NeckVariant::Neck2, NeckVariant::Neck3,
                          NeckVariant::BNNeck1, NeckVariant::BNNeck2, NeckVariant::BNNeck3,
                          NeckVariant::BNNeck}) {
        Model model(cfg, v, 9, 3);
        std::size_t held = 0;
        for (const auto& p : model.parameters()) held += p.tensor.numel();
        CHECK(held == count_params(cfg, v, 9));
    }
}

TEST_CASE("classifier weights follow the fan-in initialization variance") {
    BackboneConfig cfg = small_config();
    cfg.feature_dim = 8;
    // use a large identity count so the sample variance is tight
    Model model(cfg, NeckVariant::Neck1, 2000, 42);
    for (const auto& p : model.parameters()) {
        if (p.name != "classifier.weight") continue;
        double mean = 0.0, var = 0.0;
        for (double v : p.tensor.values()) mean += v;
        mean /= static_cast<double>(p.tensor.numel());
        for (double v : p.tensor.values()) var += (v - mean) * (v - mean);
        var /= static_cast<double>(p.tensor.numel());
        const double expected = 2.0 / static_cast<double>(cfg.feature_dim);
        CHECK(var == doctest::Approx(expected).epsilon(0.10));
    }
}

TEST_CASE("eval-mode forward is a pure function of weights and input") {
    Model model(small_config(), NeckVariant::BNNeck, 5, 9);
    Tensor images = random_images(4, small_config(), 10);
    const auto first = model.forward(images, RunMode::Eval).f_i.values();
    for (int i = 0; i < 3; ++i)
        CHECK(model.forward(images, RunMode::Eval).f_i.values() == first);
}

TEST_CASE("train-mode forward updates BN running statistics, eval does not") {
    Model model(small_config(), NeckVariant::BNNeck, 5, 9);
    const auto before = model.neck_bn().running_mean;
    model.forward(random_images(4, small_config(), 11), RunMode::Eval);
    CHECK(model.neck_bn().running_mean == before);
    model.forward(random_images(4, small_config(), 11), RunMode::Train);
    CHECK(model.neck_bn().running_mean != before);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    BackboneConfig cfg = small_config();
    cfg.feature_dim = 6;  // embed layer present
    Model model(cfg, NeckVariant::BNNeck, 7, 123);
    model.set_input_normalization({0.25}, {0.5});
    // move the running stats off their defaults
    model.forward(random_images(4, cfg, 77), RunMode::Train);

    const auto path = std::filesystem::temp_directory_path() / "reidkit_ckpt_test.bin";
    save_checkpoint(model, path, "runhash42");
    std::string tag;
    Model loaded = load_checkpoint(path, &tag);

    CHECK(tag == "runhash42");
    CHECK(loaded.variant() == model.variant());
    CHECK(loaded.num_classes() == model.num_classes());
    CHECK(loaded.input_mean() == model.input_mean());
    CHECK(loaded.input_std() == model.input_std());
    auto lhs = model.parameters();
    auto rhs = loaded.parameters();
    REQUIRE(lhs.size() == rhs.size());
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        CHECK(lhs[i].name == rhs[i].name);
        CHECK(lhs[i].tensor.values() == rhs[i].tensor.values());
    }
    CHECK(loaded.neck_bn().running_mean == model.neck_bn().running_mean);
    CHECK(loaded.neck_bn().running_var == model.neck_bn().running_var);

    // saved-loaded-saved bytes identical
    const auto path2 = std::filesystem::temp_directory_path() / "reidkit_ckpt_test2.bin";
    save_checkpoint(loaded, path2, "runhash42");
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
    std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
    CHECK(bytes_a == bytes_b);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);

    // identical eval outputs
    Tensor images = random_images(3, cfg, 99);
    CHECK(loaded.forward(images, RunMode::Eval).f_i.values() ==
          model.forward(images, RunMode::Eval).f_i.values());
}

TEST_CASE("checkpoint loader rejects a corrupted magic") {
    const auto path = std::filesystem::temp_directory_path() / "reidkit_bad_ckpt.bin";
    std::ofstream(path, std::ios::binary) << "NOTACKPT-GARBAGE";
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    std::filesystem::remove(path);
}

TEST_CASE("forward rejects a batch that does not match the configured input") {
    Model model(small_config(), NeckVariant::Neck3, 5, 1);
    CHECK_THROWS_AS(model.forward(Tensor::zeros({2, 1, 8, 8}), RunMode::Eval), ShapeError);
}

TEST_CASE("maxpool downsampling mode runs and counts like stride mode") {
    BackboneConfig cfg = small_config();
    for (auto& b : cfg.blocks) b.mode = DownsampleMode::MaxPool;
    Model model(cfg, NeckVariant::Neck3, 4, 5);
    CHECK_NOTHROW(model.forward(random_images(2, cfg, 12), RunMode::Eval));
    BackboneConfig conv_cfg = small_config();
    CHECK(count_params(cfg, NeckVariant::Neck3, 4) ==
          count_params(conv_cfg, NeckVariant::Neck3, 4));
}
