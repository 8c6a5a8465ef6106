#include "reidkit/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "reidkit/rng.hpp"

namespace reidkit {

NeckVariant parse_neck_variant(const std::string& name) {
    if (name == "neck1") return NeckVariant::Neck1;
    if (name == "neck2") return NeckVariant::Neck2;
    if (name == "neck3") return NeckVariant::Neck3;
    if (name == "bnneck1") return NeckVariant::BNNeck1;
    if (name == "bnneck2") return NeckVariant::BNNeck2;
    if (name == "bnneck3") return NeckVariant::BNNeck3;
    if (name == "bnneck") return NeckVariant::BNNeck;
    throw ConfigError("unknown neck variant: " + name);
}

std::string to_string(NeckVariant v) {
    switch (v) {
        case NeckVariant::Neck1: return "neck1";
        case NeckVariant::Neck2: return "neck2";
        case NeckVariant::Neck3: return "neck3";
        case NeckVariant::BNNeck1: return "bnneck1";
        case NeckVariant::BNNeck2: return "bnneck2";
        case NeckVariant::BNNeck3: return "bnneck3";
        case NeckVariant::BNNeck: return "bnneck";
    }
    return "?";
}

bool neck_has_bn(NeckVariant v) {
    return v == NeckVariant::BNNeck1 || v == NeckVariant::BNNeck2 ||
           v == NeckVariant::BNNeck3 || v == NeckVariant::BNNeck;
}

bool neck_has_logits(NeckVariant v) {
    return v != NeckVariant::Neck2 && v != NeckVariant::BNNeck2;
}

bool neck_uses_triplet(NeckVariant v) {
    return v != NeckVariant::Neck1 && v != NeckVariant::BNNeck1;
}

FeatureKind parse_feature_kind(const std::string& name) {
    if (name == "ft" || name == "f_t") return FeatureKind::FT;
    if (name == "fi" || name == "f_i") return FeatureKind::FI;
    throw ConfigError("unknown feature kind: " + name + " (expected ft or fi)");
}

std::string to_string(FeatureKind f) { return f == FeatureKind::FT ? "f_t" : "f_i"; }

const Tensor& NeckOutput::logits() const {
    if (!logits_)
        throw ConfigError("this neck variant attaches no classifier, logits are unavailable");
    return *logits_;
}

namespace {

Tensor kaiming_normal(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : t.values()) v = rng.normal(0.0, stddev);
    return t;
}

std::size_t channels_after_blocks(const BackboneConfig& c) {
    return c.blocks.empty() ? c.in_channels : c.blocks.back().out_channels;
}

}  // namespace

Model::Model(BackboneConfig config, NeckVariant variant, std::size_t num_classes,
             std::uint64_t seed, ModelOptions options)
    : config_(std::move(config)), variant_(variant), num_classes_(num_classes), options_(options) {
    if (config_.last_stride != 1 && config_.last_stride != 2)
        throw ConfigError("last_stride must be 1 or 2, got " + std::to_string(config_.last_stride));
    if (config_.feature_dim == 0) throw ConfigError("feature_dim must be positive");
    if (neck_has_logits(variant_) && num_classes_ == 0)
        throw ConfigError("a classifier neck needs a positive identity count");
    validate_spatial();
    build_params(seed);
    input_mean_.assign(config_.in_channels, 0.0);
    input_std_.assign(config_.in_channels, 1.0);
}

std::pair<std::size_t, std::size_t> final_spatial(const BackboneConfig& config) {
    std::size_t h = config.in_height, w = config.in_width;
    for (std::size_t i = 0; i < config.blocks.size(); ++i) {
        const std::size_t stride =
            (i + 1 == config.blocks.size()) ? static_cast<std::size_t>(config.last_stride) : 2;
        if (config.blocks[i].mode == DownsampleMode::StrideConv) {
            h = (h + 2 - 3) / stride + 1;
            w = (w + 2 - 3) / stride + 1;
        } else if (stride == 2) {
            // stride-1 conv keeps the size; pooling halves it
            if (h < 2 || w < 2)
                throw ConfigError("spatial size collapses below the pooling window");
            h = (h - 2) / 2 + 1;
            w = (w - 2) / 2 + 1;
        }
        if (h == 0 || w == 0)
            throw ConfigError("spatial size collapses to zero after block " + std::to_string(i));
    }
    return {h, w};
}

void Model::validate_spatial() const { final_spatial(config_); }

void Model::build_params(std::uint64_t seed) {
    Rng rng(mix_seed(seed ^ 0x9D0DE1uLL));
    std::size_t in_c = config_.in_channels;
    for (const auto& block : config_.blocks) {
        ConvBlock cb;
        cb.weight = kaiming_normal({block.out_channels, in_c, 3, 3}, in_c * 9, rng);
        if (config_.conv_bias) cb.bias = Tensor::zeros({block.out_channels}, true);
        blocks_.push_back(std::move(cb));
        in_c = block.out_channels;
    }
    const std::size_t c_last = channels_after_blocks(config_);
    if (config_.feature_dim != c_last) {
        embed_weight_ = kaiming_normal({c_last, config_.feature_dim}, c_last, rng);
        embed_bias_ = Tensor::zeros({config_.feature_dim}, true);
    }
    if (neck_has_bn(variant_)) {
        neck_bn_ = std::make_unique<BNState>(config_.feature_dim);
        neck_bn_->beta.set_requires_grad(options_.bn_beta_trainable);
    }
    if (neck_has_logits(variant_)) {
        classifier_weight_ =
            kaiming_normal({config_.feature_dim, num_classes_}, config_.feature_dim, rng);
        if (options_.classifier_bias) classifier_bias_ = Tensor::zeros({num_classes_}, true);
    }
}

NeckOutput Model::forward(const Tensor& images, RunMode mode) {
    if (images.rank() != 4 || images.dim(1) != config_.in_channels ||
        images.dim(2) != config_.in_height || images.dim(3) != config_.in_width)
        throw ShapeError("forward: batch " + format_shape(images.shape()) +
                         " does not match configured input [N, " +
                         std::to_string(config_.in_channels) + ", " +
                         std::to_string(config_.in_height) + ", " +
                         std::to_string(config_.in_width) + "]");

    Tensor cur = images;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const int stride = (i + 1 == blocks_.size()) ? config_.last_stride : 2;
        if (config_.blocks[i].mode == DownsampleMode::StrideConv) {
            cur = conv2d(cur, blocks_[i].weight, stride, 1);
        } else {
            cur = conv2d(cur, blocks_[i].weight, 1, 1);
        }
        if (blocks_[i].bias) cur = bias_add(cur, *blocks_[i].bias);
        cur = relu(cur);
        if (config_.blocks[i].mode == DownsampleMode::MaxPool && stride == 2)
            cur = max_pool2d(cur, 2, 2);
    }

    NeckOutput out;
    Tensor pooled = global_avg_pool(cur);
    out.f_t = embed_weight_ ? bias_add(matmul(pooled, *embed_weight_), *embed_bias_) : pooled;
    out.f_i = neck_bn_ ? batch_norm(out.f_t, *neck_bn_,
                                    mode == RunMode::Train ? BNMode::Train : BNMode::Eval)
                       : out.f_t;
    if (classifier_weight_) {
        Tensor logits = matmul(neck_bn_ ? out.f_i : out.f_t, *classifier_weight_);
        if (classifier_bias_) logits = bias_add(logits, *classifier_bias_);
        out.set_logits(std::move(logits));
    }
    return out;
}

std::vector<NamedParam> Model::parameters() {
    std::vector<NamedParam> params;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const std::string prefix = "block" + std::to_string(i);
        params.push_back({prefix + ".weight", blocks_[i].weight, true});
        if (blocks_[i].bias) params.push_back({prefix + ".bias", *blocks_[i].bias, true});
    }
    if (embed_weight_) {
        params.push_back({"embed.weight", *embed_weight_, true});
        params.push_back({"embed.bias", *embed_bias_, true});
    }
    if (neck_bn_) {
        params.push_back({"neck_bn.gamma", neck_bn_->gamma, false});
        if (options_.bn_beta_trainable) params.push_back({"neck_bn.beta", neck_bn_->beta, false});
    }
    if (classifier_weight_) {
        params.push_back({"classifier.weight", *classifier_weight_, true});
        if (classifier_bias_) params.push_back({"classifier.bias", *classifier_bias_, true});
    }
    return params;
}

BNState& Model::neck_bn() {
    if (!neck_bn_) throw ConfigError("variant " + to_string(variant_) + " has no BN layer");
    return *neck_bn_;
}

void Model::set_input_normalization(std::vector<double> mean, std::vector<double> stddev) {
    if (mean.size() != config_.in_channels || stddev.size() != config_.in_channels)
        throw ShapeError("input normalization needs one (mean, std) pair per channel");
    input_mean_ = std::move(mean);
    input_std_ = std::move(stddev);
}

std::size_t count_params(const BackboneConfig& config, NeckVariant variant,
                         std::size_t num_classes, const ModelOptions& options) {
    std::size_t count = 0;
    std::size_t in_c = config.in_channels;
    for (const auto& block : config.blocks) {
        count += block.out_channels * in_c * 9;
        if (config.conv_bias) count += block.out_channels;
        in_c = block.out_channels;
    }
    const std::size_t c_last = channels_after_blocks(config);
    if (config.feature_dim != c_last) count += c_last * config.feature_dim + config.feature_dim;
    if (neck_has_bn(variant)) count += 2 * config.feature_dim;
    if (neck_has_logits(variant)) {
        count += config.feature_dim * num_classes;
        if (options.classifier_bias) count += num_classes;
    }
    return count;
}

// ---- Checkpoint ------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'K', 'C', 'K', 'P', 'T', '0', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_vec(std::ostream& os, const std::vector<double>& v) {
    put_u32(os, static_cast<std::uint32_t>(v.size()));
    for (double d : v) put_f64(os, d);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::uint8_t get_u8(std::istream& is) {
    const int c = is.get();
    if (c == EOF) throw DataError("checkpoint: truncated file");
    return static_cast<std::uint8_t>(c);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint: truncated file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

std::string get_str(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    std::string s(n, '\0');
    if (n && !is.read(s.data(), n)) throw DataError("checkpoint: truncated file");
    return s;
}

std::vector<double> get_vec(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    std::vector<double> v(n);
    for (auto& d : v) d = get_f64(is);
    return v;
}

void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
    put_str(os, name);
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.values()) put_f64(os, v);
}

Tensor get_tensor(std::istream& is, std::string& name, bool requires_grad) {
    name = get_str(is);
    const std::uint32_t rank = get_u32(is);
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
        d = get_u32(is);
        numel *= d;
    }
    std::vector<double> values(numel);
    for (auto& v : values) v = get_f64(is);
    return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const std::string& tag) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open " + path.string() + " for writing");
    os.write(kMagic, sizeof kMagic);
    put_str(os, tag);
    const auto& c = model.config_;
    put_u32(os, static_cast<std::uint32_t>(c.in_channels));
    put_u32(os, static_cast<std::uint32_t>(c.in_height));
    put_u32(os, static_cast<std::uint32_t>(c.in_width));
    put_u32(os, static_cast<std::uint32_t>(c.blocks.size()));
    for (const auto& b : c.blocks) {
        put_u32(os, static_cast<std::uint32_t>(b.out_channels));
        put_u8(os, b.mode == DownsampleMode::MaxPool ? 1 : 0);
    }
    put_u8(os, static_cast<std::uint8_t>(c.last_stride));
    put_u32(os, static_cast<std::uint32_t>(c.feature_dim));
    put_u8(os, c.conv_bias ? 1 : 0);
    put_u8(os, static_cast<std::uint8_t>(model.variant_));
    put_u32(os, static_cast<std::uint32_t>(model.num_classes_));
    put_u8(os, model.options_.classifier_bias ? 1 : 0);
    put_u8(os, model.options_.bn_beta_trainable ? 1 : 0);
    put_vec(os, model.input_mean_);
    put_vec(os, model.input_std_);

    std::vector<std::pair<std::string, Tensor>> tensors;
    for (auto& p : const_cast<Model&>(model).parameters()) tensors.emplace_back(p.name, p.tensor);
    if (model.neck_bn_) {
        if (!model.options_.bn_beta_trainable)
            tensors.emplace_back("neck_bn.beta", model.neck_bn_->beta);
        tensors.emplace_back("neck_bn.running_mean",
                             Tensor::from({model.neck_bn_->running_mean.size()},
                                          model.neck_bn_->running_mean));
        tensors.emplace_back("neck_bn.running_var",
                             Tensor::from({model.neck_bn_->running_var.size()},
                                          model.neck_bn_->running_var));
    }
    put_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) put_tensor(os, name, t);
    if (!os) throw DataError("checkpoint: write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, std::string* tag) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path.string());
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw DataError("checkpoint: bad magic in " + path.string());
    const std::string stored_tag = get_str(is);
    if (tag) *tag = stored_tag;

    BackboneConfig c;
    c.in_channels = get_u32(is);
    c.in_height = get_u32(is);
    c.in_width = get_u32(is);
    const std::uint32_t n_blocks = get_u32(is);
    c.blocks.clear();
    for (std::uint32_t i = 0; i < n_blocks; ++i) {
        BlockSpec b;
        b.out_channels = get_u32(is);
        b.mode = get_u8(is) ? DownsampleMode::MaxPool : DownsampleMode::StrideConv;
        c.blocks.push_back(b);
    }
    c.last_stride = get_u8(is);
    c.feature_dim = get_u32(is);
    c.conv_bias = get_u8(is) != 0;
    const auto variant = static_cast<NeckVariant>(get_u8(is));
    const std::uint32_t num_classes = get_u32(is);
    ModelOptions options;
    options.classifier_bias = get_u8(is) != 0;
    options.bn_beta_trainable = get_u8(is) != 0;
    std::vector<double> mean = get_vec(is);
    std::vector<double> stddev = get_vec(is);

    Model model(c, variant, num_classes, /*seed=*/0, options);
    model.set_input_normalization(std::move(mean), std::move(stddev));

    std::map<std::string, Tensor> slots;
    for (auto& p : model.parameters()) slots.emplace(p.name, p.tensor);
    if (model.neck_bn_ && !options.bn_beta_trainable)
        slots.emplace("neck_bn.beta", model.neck_bn_->beta);

    const std::uint32_t n_tensors = get_u32(is);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        std::string name;
        Tensor loaded = get_tensor(is, name, false);
        if (name == "neck_bn.running_mean") {
            if (!model.neck_bn_) throw DataError("checkpoint: running stats without a BN neck");
            model.neck_bn_->running_mean = loaded.values();
        } else if (name == "neck_bn.running_var") {
            if (!model.neck_bn_) throw DataError("checkpoint: running stats without a BN neck");
            model.neck_bn_->running_var = loaded.values();
        } else {
            auto it = slots.find(name);
            if (it == slots.end()) throw DataError("checkpoint: unknown tensor " + name);
            if (it->second.shape() != loaded.shape())
                throw DataError("checkpoint: tensor " + name + " has shape " +
                                format_shape(loaded.shape()) + ", expected " +
                                format_shape(it->second.shape()));
            it->second.values() = loaded.values();
        }
    }
    return model;
}

}  // namespace reidkit
