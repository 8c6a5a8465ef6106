#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "reidkit/data.hpp"
#include "reidkit/losses.hpp"
#include "reidkit/model.hpp"
#include "reidkit/rng.hpp"

namespace reidkit {

// ---- Learning-rate schedule ---------------------------------------------

// Piecewise schedule: a linear warmup over the first warmup_epochs, a
// plateau at base_lr, then multiplicative decays after each decay epoch.
// time_scale < 1 compresses every breakpoint uniformly (rounded up) for
// short desk-scale runs; the unscaled schedule is the reference.
struct ScheduleConfig {
    double base_lr = 3.5e-4;
    std::size_t warmup_epochs = 10;
    std::vector<std::size_t> decay_epochs = {40, 70};
    std::vector<double> decay_factors = {0.1, 0.1};
    std::size_t total_epochs = 120;
    double time_scale = 1.0;
    bool warmup_enabled = true;

    std::size_t scaled_warmup() const;
    std::size_t scaled_decay(std::size_t i) const;
    std::size_t scaled_total() const;
};

// lr(t) for epoch t in [1, total]. Warmup branch evaluates
// base_lr * (t / warmup); decayed branches multiply the factors
// left-to-right, which pins the exact floating-point result.
double lr_at_epoch(std::size_t t, const ScheduleConfig& cfg);

// ---- PK sampling -----------------------------------------------------------

struct PKSamplerConfig {
    std::size_t num_identities = 8;   // P
    std::size_t num_per_identity = 4; // K
    std::size_t batch_size() const { return num_identities * num_per_identity; }
};

// P distinct identities, K samples each; identities with fewer than K
// images are padded by uniform redraws. Every anchor in the result has at
// least one positive and K negatives when P, K >= 2.
std::vector<std::size_t> sample_pk_batch(const std::map<int, std::vector<std::size_t>>& index,
                                         const PKSamplerConfig& cfg, Rng& rng);

// ---- Random erasing ----------------------------------------------------------

enum class REAFill { Zero, ChannelMean, Noise };

struct REAConfig {
    double probability = 0.5;
    double area_low = 0.02, area_high = 0.4;
    double aspect_low = 0.3;  // aspect ratio range [aspect_low, 1/aspect_low]
    REAFill fill = REAFill::ChannelMean;
    std::vector<double> fill_values;  // per channel, used by ChannelMean
    int max_attempts = 100;
};

// Overwrites one rectangle with probability `probability`. A candidate is
// accepted only if it fits and its realized (post-rounding) area fraction
// stays inside [area_low, area_high]; after max_attempts failures the
// image is left untouched. Returns whether an erase happened.
bool random_erase(std::vector<double>& image, std::size_t channels, std::size_t height,
                  std::size_t width, const REAConfig& cfg, Rng& rng);

// ---- Optimizer ------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 5e-4;  // skipped for params flagged no-decay
};

class Adam {
  public:
    Adam(std::vector<NamedParam> params, AdamConfig cfg);
    void step(double lr);
    void zero_grads();

  private:
    std::vector<NamedParam> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamConfig cfg_;
    std::size_t t_ = 0;
};

// ---- Training loop ----------------------------------------------------------------

struct TrainConfig {
    BackboneConfig backbone;
    NeckVariant neck = NeckVariant::Neck3;

    // trick toggles
    bool warmup = false;
    bool rea = false;
    bool label_smooth = false;
    bool last_stride_one = false;
    bool center = false;

    ScheduleConfig schedule;
    PKSamplerConfig sampler;
    REAConfig rea_cfg;
    LossWeights weights;
    TripletConfig triplet;
    double label_smooth_epsilon = 0.1;
    double center_lr = 0.5;
    bool centers_via_optimizer = false;
    AdamConfig adam;
    ModelOptions model_options;
    bool normalize_input = true;
    std::uint64_t seed = 0;
    // warm start: load weights (and normalization constants) from this
    // checkpoint instead of random initialization; the checkpoint's
    // architecture must fit the dataset
    std::filesystem::path init_checkpoint;
};

struct LogRow {
    std::size_t iteration = 0, epoch = 0;
    double lr = 0.0, loss_id = 0.0, loss_triplet = 0.0, loss_center = 0.0, total = 0.0;
};

struct TrainingLog {
    std::vector<LogRow> rows;
    bool diverged = false;
    std::size_t diverged_iteration = 0;
};

// TSV with one row per iteration: iteration, epoch, lr, L_ID, L_Tri, L_C, total.
void write_training_log(const std::filesystem::path& path, const TrainingLog& log,
                        const std::string& manifest_hash = "");

struct TrainResult {
    Model model;
    TrainingLog log;
    CenterBank centers;
    std::vector<int> class_identities;  // class index -> dataset identity
};

// Full loop: PK batches, normalization + optional erasing, forward through
// the configured neck, loss composition per variant, Adam step and center
// update, one log row per iteration. A non-finite loss aborts the run with
// the offending iteration recorded in the log.
TrainResult train(const IdentityDataset& trainset, const TrainConfig& cfg);

}  // namespace reidkit
