#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reidkit/tensor.hpp"

namespace reidkit {

// The seven neck structures. Neck1..3 attach losses to the pooled feature
// directly; BNNeck1..3 attach them after an added BN layer; BNNeck splits
// them, triplet before BN and identity after.
enum class NeckVariant { Neck1, Neck2, Neck3, BNNeck1, BNNeck2, BNNeck3, BNNeck };

NeckVariant parse_neck_variant(const std::string& name);
std::string to_string(NeckVariant v);
bool neck_has_bn(NeckVariant v);
bool neck_has_logits(NeckVariant v);    // false for Neck2 / BNNeck2
bool neck_uses_triplet(NeckVariant v);  // false for Neck1 / BNNeck1

// Which of the two embeddings each loss or retrieval pass reads.
enum class FeatureKind { FT, FI };
FeatureKind parse_feature_kind(const std::string& name);
std::string to_string(FeatureKind f);

enum class RunMode { Train, Eval };

enum class DownsampleMode { StrideConv, MaxPool };

struct BlockSpec {
    std::size_t out_channels = 0;
    DownsampleMode mode = DownsampleMode::StrideConv;
};

struct BackboneConfig {
    std::size_t in_channels = 1, in_height = 28, in_width = 28;
    std::vector<BlockSpec> blocks = {{16}, {32}, {64}};
    int last_stride = 2;  // spatial factor of the final block; 1 or 2
    std::size_t feature_dim = 64;
    bool conv_bias = true;
};

struct ModelOptions {
    // The classifier hyperplanes carry no additive offset by default;
    // configurable because the choice is not forced by anything upstream.
    bool classifier_bias = false;
    bool bn_beta_trainable = true;
};

struct NeckOutput {
    Tensor f_t;  // pooled feature, pre-BN
    Tensor f_i;  // post-BN feature; equal to f_t for BN-free variants

    bool has_logits() const { return logits_.has_value(); }
    const Tensor& logits() const;
    void set_logits(Tensor t) { logits_ = std::move(t); }

    const Tensor& feature(FeatureKind kind) const { return kind == FeatureKind::FT ? f_t : f_i; }

  private:
    std::optional<Tensor> logits_;
};

struct NamedParam {
    std::string name;
    Tensor tensor;
    bool weight_decay = true;  // false for BN parameters
};

// Small plain CNN backbone (3x3 convs, relu, configurable downsampling)
// with one of the seven necks and a classifier head on top. All weights
// use Kaiming-normal fan-in initialization; BN starts at identity.
class Model {
  public:
    Model(BackboneConfig config, NeckVariant variant, std::size_t num_classes,
          std::uint64_t seed, ModelOptions options = {});

    // Train mode records gradients (when a Graph is current) and BN uses
    // batch statistics; eval mode is a pure function of weights, running
    // statistics and input.
    NeckOutput forward(const Tensor& images, RunMode mode);

    std::vector<NamedParam> parameters();

    const BackboneConfig& config() const { return config_; }
    NeckVariant variant() const { return variant_; }
    std::size_t num_classes() const { return num_classes_; }
    const ModelOptions& options() const { return options_; }
    BNState& neck_bn();

    // Per-channel input normalization constants, applied by the data
    // pipeline (not inside forward) and persisted in checkpoints.
    void set_input_normalization(std::vector<double> mean, std::vector<double> stddev);
    const std::vector<double>& input_mean() const { return input_mean_; }
    const std::vector<double>& input_std() const { return input_std_; }

  private:
    friend void save_checkpoint(const Model&, const std::filesystem::path&, const std::string&);
    friend Model load_checkpoint(const std::filesystem::path&, std::string*);
    Model() = default;
    void build_params(std::uint64_t seed);
    void validate_spatial() const;

    BackboneConfig config_;
    NeckVariant variant_ = NeckVariant::Neck3;
    std::size_t num_classes_ = 0;
    ModelOptions options_;

    struct ConvBlock {
        Tensor weight;               // (oc, ic, 3, 3)
        std::optional<Tensor> bias;  // (oc)
    };
    std::vector<ConvBlock> blocks_;
    std::optional<Tensor> embed_weight_;  // (c_last, feature_dim), present iff dims differ
    std::optional<Tensor> embed_bias_;
    std::unique_ptr<BNState> neck_bn_;
    std::optional<Tensor> classifier_weight_;  // (feature_dim, num_classes)
    std::optional<Tensor> classifier_bias_;
    std::vector<double> input_mean_, input_std_;
};

// Trainable-parameter count for a configuration; independent of
// last_stride by construction.
std::size_t count_params(const BackboneConfig& config, NeckVariant variant,
                         std::size_t num_classes, const ModelOptions& options = {});

// Spatial extent (height, width) of the feature map entering global
// pooling. Changing last_stride moves only this, never parameter shapes.
std::pair<std::size_t, std::size_t> final_spatial(const BackboneConfig& config);

// Versioned binary checkpoint holding config, every weight, BN running
// statistics and the input normalization constants. Round-trips bit-exactly.
// `tag` is free-form provenance (runs store their manifest hash there).
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const std::string& tag = "");
Model load_checkpoint(const std::filesystem::path& path, std::string* tag = nullptr);

}  // namespace reidkit
