#include <cmath>
#include <doctest.h>
#include <filesystem>
#include <fstream>
#include <set>

#include "reidkit/train.hpp"

using namespace reidkit;

TEST_CASE("lr schedule matches the piecewise definition for every epoch, zero tolerance") {
    const ScheduleConfig cfg;  // defaults: 3.5e-4, warmup 10, decays 40/70, total 120
    for (std::size_t t = 1; t <= 120; ++t) {
        double expected;
        if (t <= 10)
            expected = 3.5e-4 * (static_cast<double>(t) / 10.0);
        else if (t <= 40)
            expected = 3.5e-4;
        else if (t <= 70)
            expected = 3.5e-4 * 0.1;
        else
            expected = 3.5e-4 * 0.1 * 0.1;
        CHECK(lr_at_epoch(t, cfg) == expected);
    }
}

TEST_CASE("lr schedule spot values") {
    const ScheduleConfig cfg;
    CHECK(lr_at_epoch(5, cfg) == doctest::Approx(1.75e-4).epsilon(1e-15));
    CHECK(lr_at_epoch(10, cfg) == doctest::Approx(3.5e-4).epsilon(1e-15));
    CHECK(lr_at_epoch(50, cfg) == doctest::Approx(3.5e-5).epsilon(1e-12));
    CHECK(lr_at_epoch(120, cfg) == doctest::Approx(3.5e-6).epsilon(1e-12));
}

TEST_CASE("lr schedule rejects epochs outside [1, total]") {
    const ScheduleConfig cfg;
    CHECK_THROWS_AS(lr_at_epoch(0, cfg), ConfigError);
    CHECK_THROWS_AS(lr_at_epoch(121, cfg), ConfigError);
}

TEST_CASE("warmup disabled holds the base rate through the ramp epochs") {
    ScheduleConfig cfg;
    cfg.warmup_enabled = false;
    CHECK(lr_at_epoch(1, cfg) == 3.5e-4);
    CHECK(lr_at_epoch(5, cfg) == 3.5e-4);
    CHECK(lr_at_epoch(50, cfg) == 3.5e-4 * 0.1);
}

TEST_CASE("time-scale 1/4 compresses breakpoints with ceil: 3, 10, 18, 30") {
    ScheduleConfig cfg;
    cfg.time_scale = 0.25;
    CHECK(cfg.scaled_warmup() == 3);
    CHECK(cfg.scaled_decay(0) == 10);
    CHECK(cfg.scaled_decay(1) == 18);
    CHECK(cfg.scaled_total() == 30);
    // ramp runs over 3 epochs, plateau until epoch 10
    CHECK(lr_at_epoch(1, cfg) == 3.5e-4 * (1.0 / 3.0));
    CHECK(lr_at_epoch(3, cfg) == 3.5e-4 * (3.0 / 3.0));
    CHECK(lr_at_epoch(10, cfg) == 3.5e-4);
    CHECK(lr_at_epoch(11, cfg) == 3.5e-4 * 0.1);
    CHECK(lr_at_epoch(30, cfg) == 3.5e-4 * 0.1 * 0.1);
    CHECK_THROWS_AS(lr_at_epoch(31, cfg), ConfigError);
}

TEST_CASE("pk sampler: forced composition on a 2-identity dataset") {
    std::map<int, std::vector<std::size_t>> index = {{3, {0, 1, 5}}, {9, {2, 4}}};
    Rng rng(7);
    PKSamplerConfig cfg{2, 2};
    const auto batch = sample_pk_batch(index, cfg, rng);
    REQUIRE(batch.size() == 4);
    std::set<int> seen;
    for (std::size_t i : batch) seen.insert(i == 2 || i == 4 ? 9 : 3);
    CHECK(seen == std::set<int>{3, 9});
}

TEST_CASE("pk sampler: an identity with one image is repeated K times") {
    std::map<int, std::vector<std::size_t>> index = {{1, {42}}, {2, {7, 8, 9, 10}}};
    Rng rng(11);
    PKSamplerConfig cfg{2, 4};
    const auto batch = sample_pk_batch(index, cfg, rng);
    REQUIRE(batch.size() == 8);
    std::size_t count42 = 0;
    for (std::size_t i : batch) count42 += i == 42 ? 1 : 0;
    CHECK(count42 == 4);
}

TEST_CASE("pk sampler: fixed seed gives an identical batch sequence") {
    std::map<int, std::vector<std::size_t>> index;
    for (int id = 0; id < 12; ++id)
        for (std::size_t s = 0; s < 5; ++s) index[id].push_back(id * 100 + s);
    PKSamplerConfig cfg{4, 3};
    for (std::uint64_t iter = 0; iter < 10; ++iter) {
        Rng a = make_stream(123, 0xAB, iter);
        Rng b = make_stream(123, 0xAB, iter);
        CHECK(sample_pk_batch(index, cfg, a) == sample_pk_batch(index, cfg, b));
    }
}

TEST_CASE("pk sampler: every anchor has a positive and K negatives") {
    std::map<int, std::vector<std::size_t>> index;
    std::map<std::size_t, int> id_of;
    for (int id = 0; id < 9; ++id)
        for (std::size_t s = 0; s < 4; ++s) {
            index[id].push_back(id * 10 + s);
            id_of[id * 10 + s] = id;
        }
    PKSamplerConfig cfg{3, 3};
    for (std::uint64_t iter = 0; iter < 50; ++iter) {
        Rng rng = make_stream(5, 0xCD, iter);
        const auto batch = sample_pk_batch(index, cfg, rng);
        for (std::size_t a : batch) {
            std::size_t positives = 0, negatives = 0;
            for (std::size_t b : batch) {
                if (b == a) continue;
                (id_of.at(b) == id_of.at(a) ? positives : negatives) += 1;
            }
            CHECK(positives >= 1);
            CHECK(negatives >= cfg.num_per_identity);
        }
    }
}

TEST_CASE("pk sampler rejects too few identities") {
    std::map<int, std::vector<std::size_t>> index = {{0, {0, 1}}};
    Rng rng(3);
    CHECK_THROWS_AS(sample_pk_batch(index, {2, 2}, rng), DataError);
}

TEST_CASE("random erasing: p=0 leaves the image untouched") {
    std::vector<double> image(3 * 8 * 8, 0.7);
    const auto original = image;
    REAConfig cfg;
    cfg.probability = 0.0;
    Rng rng(1);
    CHECK_FALSE(random_erase(image, 3, 8, 8, cfg, rng));
    CHECK(image == original);
}

TEST_CASE("random erasing: p=1 erases one rectangle within the area bounds") {
    REAConfig cfg;
    cfg.probability = 1.0;
    cfg.fill = REAFill::Zero;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        std::vector<double> image(28 * 28, 1.0);
        Rng rng = make_stream(seed, 0xEA, 0);
        REQUIRE(random_erase(image, 1, 28, 28, cfg, rng));
        // measure the erased region: rows/cols containing zeros
        std::size_t min_r = 28, max_r = 0, min_c = 28, max_c = 0, zeros = 0;
        for (std::size_t r = 0; r < 28; ++r)
            for (std::size_t c = 0; c < 28; ++c)
                if (image[r * 28 + c] == 0.0) {
                    ++zeros;
                    min_r = std::min(min_r, r);
                    max_r = std::max(max_r, r);
                    min_c = std::min(min_c, c);
                    max_c = std::max(max_c, c);
                }
        REQUIRE(zeros > 0);
        const std::size_t rect = (max_r - min_r + 1) * (max_c - min_c + 1);
        CHECK(rect == zeros);  // exactly one solid rectangle
        const double fraction = static_cast<double>(zeros) / (28.0 * 28.0);
        CHECK(fraction >= cfg.area_low);
        CHECK(fraction <= cfg.area_high);
    }
}

TEST_CASE("random erasing: same seed twice gives identical output") {
    REAConfig cfg;
    cfg.probability = 0.5;
    cfg.fill = REAFill::Noise;
    for (std::uint64_t iter = 0; iter < 20; ++iter) {
        std::vector<double> a(2 * 10 * 10), b(2 * 10 * 10);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = b[i] = 0.25;
        Rng ra = make_stream(9, 0xF00, iter), rb = make_stream(9, 0xF00, iter);
        random_erase(a, 2, 10, 10, cfg, ra);
        random_erase(b, 2, 10, 10, cfg, rb);
        CHECK(a == b);
    }
}

TEST_CASE("random erasing: 10k draws stay in the area band and hit ~p") {
    REAConfig cfg;
    cfg.probability = 0.5;
    cfg.fill = REAFill::Zero;
    std::size_t erased = 0;
    for (std::uint64_t draw = 0; draw < 10000; ++draw) {
        std::vector<double> image(16 * 16, 1.0);
        Rng rng = make_stream(77, 0xEA2, draw);
        if (!random_erase(image, 1, 16, 16, cfg, rng)) continue;
        ++erased;
        std::size_t zeros = 0;
        for (double v : image) zeros += v == 0.0 ? 1 : 0;
        const double fraction = static_cast<double>(zeros) / 256.0;
        CHECK(fraction >= cfg.area_low);
        CHECK(fraction <= cfg.area_high);
    }
    const double frequency = static_cast<double>(erased) / 10000.0;
    CHECK(std::abs(frequency - cfg.probability) < 0.02);
}

TEST_CASE("adam takes a basic gradient step") {
    Tensor w = Tensor::from({2}, {1.0, -1.0}, true);
    Adam adam({{"w", w, false}}, {});
    w.grad() = {1.0, -1.0};
    adam.step(0.1);
    // first step moves by ~lr in the gradient direction
    CHECK(w.values()[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(w.values()[1] == doctest::Approx(-0.9).epsilon(1e-6));
}

namespace {

TrainConfig blob_train_config() {
    TrainConfig cfg;
    cfg.backbone.blocks = {{4}, {8}};
    cfg.backbone.feature_dim = 8;
    cfg.neck = NeckVariant::Neck3;
    cfg.sampler = {2, 2};
    cfg.schedule.time_scale = 0.25;  // 30 epochs
    cfg.schedule.total_epochs = 120;
    cfg.seed = 424242;
    return cfg;
}

IdentityDataset blob_trainset() {
    SyntheticBlobConfig blob;
    blob.num_identities = 2;
    blob.samples_per_identity = 8;
    blob.height = 12;
    blob.width = 12;
    blob.noise_amplitude = 0.04;
    blob.seed = 31415;
    return make_blobs(blob);
}

}  // namespace

TEST_CASE("training separable 2-identity blobs drives the triplet loss under the margin") {
    const TrainConfig cfg = blob_train_config();
    const TrainResult result = train(blob_trainset(), cfg);
    REQUIRE_FALSE(result.log.diverged);
    REQUIRE_FALSE(result.log.rows.empty());
    CHECK(result.log.rows.back().loss_triplet < cfg.triplet.margin);
}

TEST_CASE("training log is complete and the same seed reproduces it bit for bit") {
    const TrainConfig cfg = blob_train_config();
    const TrainResult a = train(blob_trainset(), cfg);
    const TrainResult b = train(blob_trainset(), cfg);
    REQUIRE(a.log.rows.size() == b.log.rows.size());
    // one record per iteration, no gaps
    for (std::size_t i = 0; i < a.log.rows.size(); ++i)
        CHECK(a.log.rows[i].iteration == i + 1);
    for (std::size_t i = 0; i < a.log.rows.size(); ++i) {
        CHECK(a.log.rows[i].lr == b.log.rows[i].lr);
        CHECK(a.log.rows[i].loss_id == b.log.rows[i].loss_id);
        CHECK(a.log.rows[i].loss_triplet == b.log.rows[i].loss_triplet);
        CHECK(a.log.rows[i].loss_center == b.log.rows[i].loss_center);
        CHECK(a.log.rows[i].total == b.log.rows[i].total);
    }

    // written log files byte-identical
    const auto dir = std::filesystem::temp_directory_path();
    write_training_log(dir / "log_a.tsv", a.log, "h");
    write_training_log(dir / "log_b.tsv", b.log, "h");
    std::ifstream fa(dir / "log_a.tsv"), fb(dir / "log_b.tsv");
    std::string sa((std::istreambuf_iterator<char>(fa)), {});
    std::string sb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(sa == sb);
    std::filesystem::remove(dir / "log_a.tsv");
    std::filesystem::remove(dir / "log_b.tsv");
}

TEST_CASE("an absurd learning rate ends in a recorded divergence") {
    TrainConfig cfg = blob_train_config();
    // the first optimizer step pushes weights to ~1e200, the next forward
    // overflows through the second conv block
    cfg.schedule.base_lr = 1e200;
    cfg.schedule.warmup_epochs = 0;
    const TrainResult result = train(blob_trainset(), cfg);
    CHECK(result.log.diverged);
    CHECK(result.log.diverged_iteration > 0);
}

TEST_CASE("center loss participates when enabled") {
    TrainConfig cfg = blob_train_config();
    cfg.center = true;
    cfg.weights.beta = 0.01;
    cfg.schedule.time_scale = 0.05;  // 6 epochs, quick
    const TrainResult result = train(blob_trainset(), cfg);
    REQUIRE_FALSE(result.log.diverged);
    CHECK(result.log.rows.front().loss_center > 0.0);
    // centers moved off the origin
    double norm = 0.0;
    for (double v : result.centers.centers.values()) norm += v * v;
    CHECK(norm > 0.0);
}

TEST_CASE("with erasing disabled the input pipeline is the identity on pixels") {
    // normalization off and REA off: the model sees raw pixel values, and
    // the stored normalization constants are the identity transform
    TrainConfig cfg = blob_train_config();
    cfg.rea = false;
    cfg.normalize_input = false;
    cfg.schedule.time_scale = 0.0167;  // 2 epochs
    const TrainResult result = train(blob_trainset(), cfg);
    CHECK(result.model.input_mean() == std::vector<double>{0.0});
    CHECK(result.model.input_std() == std::vector<double>{1.0});
}

TEST_CASE("training works for every neck variant") {
    for (NeckVariant v : {NeckVariant::Neck1, NeckVariant::Neck2, NeckVariant::BNNeck2,
                          NeckVariant::BNNeck3, NeckVariant::BNNeck}) {
        TrainConfig cfg = blob_train_config();
        cfg.neck = v;
        cfg.schedule.time_scale = 0.05;
        const TrainResult result = train(blob_trainset(), cfg);
        CHECK_FALSE(result.log.diverged);
        if (!neck_has_logits(v)) CHECK(result.log.rows.back().loss_id == 0.0);
        if (!neck_uses_triplet(v)) CHECK(result.log.rows.back().loss_triplet == 0.0);
    }
}
