#include "reidkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace reidkit {

// ---- Schedule ---------------------------------------------------------------

namespace {

std::size_t scale_breakpoint(std::size_t epochs, double scale) {
    if (scale == 1.0) return epochs;
    // rounded up; the tiny slack absorbs representation error in scale
    const double scaled = static_cast<double>(epochs) * scale;
    return static_cast<std::size_t>(std::ceil(scaled - 1e-9));
}

}  // namespace

std::size_t ScheduleConfig::scaled_warmup() const { return scale_breakpoint(warmup_epochs, time_scale); }
std::size_t ScheduleConfig::scaled_decay(std::size_t i) const {
    return scale_breakpoint(decay_epochs.at(i), time_scale);
}
std::size_t ScheduleConfig::scaled_total() const { return scale_breakpoint(total_epochs, time_scale); }

double lr_at_epoch(std::size_t t, const ScheduleConfig& cfg) {
    if (cfg.base_lr <= 0.0) throw ConfigError("schedule: base_lr must be positive");
    if (cfg.time_scale <= 0.0) throw ConfigError("schedule: time_scale must be positive");
    if (cfg.decay_epochs.size() != cfg.decay_factors.size())
        throw ConfigError("schedule: decay_epochs and decay_factors differ in length");
    const std::size_t total = cfg.scaled_total();
    if (t < 1 || t > total)
        throw ConfigError("schedule: epoch " + std::to_string(t) + " outside [1, " +
                          std::to_string(total) + "]");

    const std::size_t warmup = cfg.scaled_warmup();
    double lr;
    if (cfg.warmup_enabled && warmup > 0 && t <= warmup)
        lr = cfg.base_lr * (static_cast<double>(t) / static_cast<double>(warmup));
    else
        lr = cfg.base_lr;
    for (std::size_t i = 0; i < cfg.decay_epochs.size(); ++i)
        if (t > cfg.scaled_decay(i)) lr *= cfg.decay_factors[i];
    return lr;
}

// ---- PK sampler ----------------------------------------------------------------

std::vector<std::size_t> sample_pk_batch(const std::map<int, std::vector<std::size_t>>& index,
                                         const PKSamplerConfig& cfg, Rng& rng) {
    if (cfg.num_identities < 2 || cfg.num_per_identity < 2)
        throw ConfigError("pk sampler: requires P >= 2 and K >= 2");
    if (index.size() < cfg.num_identities)
        throw DataError("pk sampler: dataset has " + std::to_string(index.size()) +
                        " identities, needs " + std::to_string(cfg.num_identities));

    std::vector<int> ids;
    ids.reserve(index.size());
    for (const auto& [id, _] : index) ids.push_back(id);
    // partial Fisher-Yates: the first P entries form the draw
    for (std::size_t i = 0; i < cfg.num_identities; ++i) {
        const auto j = static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(ids.size()) - 1));
        std::swap(ids[i], ids[j]);
    }

    std::vector<std::size_t> batch;
    batch.reserve(cfg.batch_size());
    for (std::size_t p = 0; p < cfg.num_identities; ++p) {
        const auto& samples = index.at(ids[p]);
        if (samples.size() >= cfg.num_per_identity) {
            std::vector<std::size_t> pool = samples;
            rng.shuffle(pool);
            batch.insert(batch.end(), pool.begin(), pool.begin() + cfg.num_per_identity);
        } else {
            batch.insert(batch.end(), samples.begin(), samples.end());
            for (std::size_t k = samples.size(); k < cfg.num_per_identity; ++k)
                batch.push_back(samples[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(samples.size()) - 1))]);
        }
    }
    return batch;
}

// ---- Random erasing ---------------------------------------------------------------

bool random_erase(std::vector<double>& image, std::size_t channels, std::size_t height,
                  std::size_t width, const REAConfig& cfg, Rng& rng) {
    if (cfg.probability < 0.0 || cfg.probability > 1.0)
        throw ConfigError("random erasing: probability must lie in [0, 1]");
    if (!(cfg.area_low > 0.0 && cfg.area_low <= cfg.area_high && cfg.area_high < 1.0))
        throw ConfigError("random erasing: area range must satisfy 0 < low <= high < 1");
    if (!(cfg.aspect_low > 0.0 && cfg.aspect_low <= 1.0))
        throw ConfigError("random erasing: aspect_low must lie in (0, 1]");
    if (height == 0 || width == 0) throw ShapeError("random erasing: empty image");

    if (rng.uniform() >= cfg.probability) return false;

    const double area = static_cast<double>(height * width);
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        const double target = rng.uniform(cfg.area_low, cfg.area_high) * area;
        const double aspect = rng.uniform(cfg.aspect_low, 1.0 / cfg.aspect_low);
        const auto eh = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
        const auto ew = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
        if (eh < 1 || ew < 1 || eh > height || ew > width) continue;
        const double realized = static_cast<double>(eh * ew) / area;
        if (realized < cfg.area_low || realized > cfg.area_high) continue;

        const auto y0 = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(height - eh)));
        const auto x0 = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(width - ew)));
        for (std::size_t c = 0; c < channels; ++c) {
            double fill = 0.0;
            if (cfg.fill == REAFill::ChannelMean)
                fill = c < cfg.fill_values.size() ? cfg.fill_values[c] : 0.0;
            for (std::size_t y = y0; y < y0 + eh; ++y)
                for (std::size_t x = x0; x < x0 + ew; ++x) {
                    const std::size_t idx = (c * height + y) * width + x;
                    image[idx] = cfg.fill == REAFill::Noise ? rng.uniform() : fill;
                }
        }
        return true;
    }
    return false;
}

// ---- Adam --------------------------------------------------------------------------

Adam::Adam(std::vector<NamedParam> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void Adam::zero_grads() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        auto& w = params_[p].tensor.values();
        auto& g = params_[p].tensor.grad();
        const bool decay = params_[p].weight_decay && cfg_.weight_decay != 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double grad = g[i] + (decay ? cfg_.weight_decay * w[i] : 0.0);
            m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * grad;
            v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * grad * grad;
            w[i] -= lr * (m_[p][i] / bc1) / (std::sqrt(v_[p][i] / bc2) + cfg_.eps);
        }
    }
}

// ---- Training loop -------------------------------------------------------------------

namespace {

constexpr std::uint64_t kSampleStream = 0x5A3Bull;
constexpr std::uint64_t kEraseStream = 0xE7A5Eull;

std::string fmt_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_training_log(const std::filesystem::path& path, const TrainingLog& log,
                        const std::string& manifest_hash) {
    std::ofstream os(path);
    if (!os) throw DataError("training log: cannot open " + path.string() + " for writing");
    if (!manifest_hash.empty()) os << "# manifest " << manifest_hash << '\n';
    os << "iteration\tepoch\tlr\tL_ID\tL_Tri\tL_C\ttotal\n";
    for (const auto& row : log.rows)
        os << row.iteration << '\t' << row.epoch << '\t' << fmt_full(row.lr) << '\t'
           << fmt_full(row.loss_id) << '\t' << fmt_full(row.loss_triplet) << '\t'
           << fmt_full(row.loss_center) << '\t' << fmt_full(row.total) << '\n';
    if (!os) throw DataError("training log: write failed for " + path.string());
}

TrainResult train(const IdentityDataset& trainset, const TrainConfig& cfg) {
    if (trainset.size() == 0) throw DataError("train: empty dataset");
    if (trainset.identity_index.size() < 2)
        throw DataError("train: need at least 2 identities, got " +
                        std::to_string(trainset.identity_index.size()));

    // class index <-> identity mapping, in sorted identity order
    std::vector<int> class_identities;
    std::map<int, int> class_of;
    for (const auto& [id, _] : trainset.identity_index) {
        class_of[id] = static_cast<int>(class_identities.size());
        class_identities.push_back(id);
    }
    const std::size_t num_classes = class_identities.size();

    BackboneConfig backbone = cfg.backbone;
    backbone.in_channels = trainset.channels;
    backbone.in_height = trainset.height;
    backbone.in_width = trainset.width;
    backbone.last_stride = cfg.last_stride_one ? 1 : 2;

    const bool warm_start = !cfg.init_checkpoint.empty();
    Model model = warm_start ? load_checkpoint(cfg.init_checkpoint)
                             : Model(backbone, cfg.neck, num_classes, cfg.seed,
                                     cfg.model_options);
    if (warm_start) {
        const auto& c = model.config();
        if (c.in_channels != trainset.channels || c.in_height != trainset.height ||
            c.in_width != trainset.width)
            throw ConfigError("warm start: checkpoint input shape does not match the dataset");
        if (model.num_classes() != num_classes && neck_has_logits(model.variant()))
            throw ConfigError("warm start: checkpoint has " +
                              std::to_string(model.num_classes()) + " classes, dataset has " +
                              std::to_string(num_classes));
        if (model.variant() != cfg.neck)
            throw ConfigError("warm start: checkpoint neck is " + to_string(model.variant()) +
                              ", manifest asks for " + to_string(cfg.neck));
        backbone = c;
    }

    // per-channel normalization constants from the training population
    const std::size_t plane = trainset.height * trainset.width;
    std::vector<double> mean(trainset.channels, 0.0), stddev(trainset.channels, 1.0);
    if (warm_start) {
        // keep the constants the checkpointed model was trained with
        mean = model.input_mean();
        stddev = model.input_std();
    } else if (cfg.normalize_input) {
        std::vector<double> sum(trainset.channels, 0.0), sumsq(trainset.channels, 0.0);
        for (const auto& image : trainset.images)
            for (std::size_t c = 0; c < trainset.channels; ++c)
                for (std::size_t p = 0; p < plane; ++p) {
                    const double v = image[c * plane + p];
                    sum[c] += v;
                    sumsq[c] += v * v;
                }
        const double n = static_cast<double>(trainset.size() * plane);
        for (std::size_t c = 0; c < trainset.channels; ++c) {
            mean[c] = sum[c] / n;
            const double var = sumsq[c] / n - mean[c] * mean[c];
            stddev[c] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
    }
    model.set_input_normalization(mean, stddev);

    // erase fill: per-channel mean of the normalized training pixels
    REAConfig rea_cfg = cfg.rea_cfg;
    if (rea_cfg.fill == REAFill::ChannelMean && rea_cfg.fill_values.empty()) {
        rea_cfg.fill_values.assign(trainset.channels, 0.0);
        for (const auto& image : trainset.images)
            for (std::size_t c = 0; c < trainset.channels; ++c)
                for (std::size_t p = 0; p < plane; ++p)
                    rea_cfg.fill_values[c] += (image[c * plane + p] - mean[c]) / stddev[c];
        for (std::size_t c = 0; c < trainset.channels; ++c)
            rea_cfg.fill_values[c] /= static_cast<double>(trainset.size() * plane);
    }

    CenterBank centers(num_classes, backbone.feature_dim);
    centers.center_lr = cfg.center_lr;
    centers.via_optimizer = cfg.centers_via_optimizer;
    centers.centers.set_requires_grad(cfg.centers_via_optimizer);

    std::vector<NamedParam> params = model.parameters();
    if (cfg.center && cfg.centers_via_optimizer)
        params.push_back({"centers", centers.centers, false});
    Adam optimizer(std::move(params), cfg.adam);

    ScheduleConfig schedule = cfg.schedule;
    schedule.warmup_enabled = cfg.warmup;

    const std::size_t batch = cfg.sampler.batch_size();
    const std::size_t iters_per_epoch = std::max<std::size_t>(1, trainset.size() / batch);
    const std::size_t total_epochs = schedule.scaled_total();

    TrainResult result{std::move(model), {}, std::move(centers), class_identities};
    TrainingLog& log = result.log;

    std::size_t iteration = 0;
    for (std::size_t epoch = 1; epoch <= total_epochs && !log.diverged; ++epoch) {
        const double lr = lr_at_epoch(epoch, schedule);
        for (std::size_t it = 0; it < iters_per_epoch; ++it) {
            ++iteration;
            Rng sample_rng = make_stream(cfg.seed, kSampleStream, iteration);
            Rng erase_rng = make_stream(cfg.seed, kEraseStream, iteration);

            const std::vector<std::size_t> picks =
                sample_pk_batch(trainset.identity_index, cfg.sampler, sample_rng);
            Tensor images = Tensor::zeros(
                {batch, trainset.channels, trainset.height, trainset.width});
            std::vector<int> labels(batch);
            for (std::size_t b = 0; b < batch; ++b) {
                std::vector<double> pixels = trainset.images[picks[b]];
                if (cfg.normalize_input)
                    for (std::size_t c = 0; c < trainset.channels; ++c)
                        for (std::size_t p = 0; p < plane; ++p)
                            pixels[c * plane + p] = (pixels[c * plane + p] - mean[c]) / stddev[c];
                if (cfg.rea)
                    random_erase(pixels, trainset.channels, trainset.height, trainset.width,
                                 rea_cfg, erase_rng);
                std::copy(pixels.begin(), pixels.end(),
                          images.values().begin() + b * pixels.size());
                labels[b] = class_of.at(trainset.identities[picks[b]]);
            }

            Graph tape;
            TotalLoss losses;
            Tensor batch_f_t;
            bool numeric_failure = false;
            {
                Graph::Scope scope(tape);
                try {
                    NeckOutput out = result.model.forward(images, RunMode::Train);
                    batch_f_t = out.f_t;
                    LossTerms terms;
                    if (neck_has_logits(cfg.neck)) {
                        LabelSmoothConfig ls{cfg.label_smooth ? cfg.label_smooth_epsilon : 0.0,
                                             num_classes};
                        terms.id = id_loss(out.logits(), labels, ls);
                    }
                    if (neck_uses_triplet(cfg.neck)) {
                        // BNNeck mines on the pre-BN feature; BNNeck2/3 sit after BN
                        const Tensor& tri_feature =
                            (neck_has_bn(cfg.neck) && cfg.neck != NeckVariant::BNNeck) ? out.f_i
                                                                                       : out.f_t;
                        terms.triplet = batch_hard_triplet(tri_feature, labels, cfg.triplet);
                    }
                    if (cfg.center) terms.center = center_loss(out.f_t, labels, result.centers);
                    losses = total_loss(terms, cfg.weights);
                    if (!std::isfinite(losses.total.item())) numeric_failure = true;
                } catch (const NumericError&) {
                    numeric_failure = true;
                }
            }
            if (numeric_failure) {
                log.diverged = true;
                log.diverged_iteration = iteration;
                break;
            }

            optimizer.zero_grads();
            tape.backward(losses.total);
            optimizer.step(lr);
            if (cfg.center && !cfg.centers_via_optimizer)
                update_centers(result.centers, batch_f_t, labels);

            log.rows.push_back({iteration, epoch, lr, losses.id, losses.triplet, losses.center,
                                losses.total.item()});
        }
    }
    return result;
}

}  // namespace reidkit
