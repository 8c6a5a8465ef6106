#include "reidkit/losses.hpp"

#include <algorithm>
#include <cmath>

namespace reidkit {

std::vector<double> smooth_targets(std::size_t y, const LabelSmoothConfig& cfg) {
    if (cfg.num_classes == 0) throw ConfigError("smooth_targets: num_classes must be positive");
    if (cfg.epsilon < 0.0 || cfg.epsilon >= 1.0)
        throw ConfigError("smooth_targets: epsilon must lie in [0, 1), got " +
                          std::to_string(cfg.epsilon));
    if (y >= cfg.num_classes)
        throw DataError("smooth_targets: label " + std::to_string(y) + " out of range for " +
                        std::to_string(cfg.num_classes) + " classes");
    const double n = static_cast<double>(cfg.num_classes);
    std::vector<double> q(cfg.num_classes, cfg.epsilon / n);
    q[y] = 1.0 - cfg.epsilon * (n - 1.0) / n;
    return q;
}

Tensor id_loss(const Tensor& logits, const std::vector<int>& labels,
               const LabelSmoothConfig& cfg) {
    if (logits.rank() != 2 || logits.dim(1) != cfg.num_classes)
        throw ShapeError("id_loss: logits " + format_shape(logits.shape()) + " do not match " +
                         std::to_string(cfg.num_classes) + " classes");
    const std::size_t b = logits.dim(0), n = logits.dim(1);
    if (labels.size() != b)
        throw ShapeError("id_loss: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(b));
    for (double v : logits.values())
        if (!std::isfinite(v)) throw NumericError("id_loss: non-finite logits");

    std::vector<double> targets(b * n);
    for (std::size_t i = 0; i < b; ++i) {
        if (labels[i] < 0) throw DataError("id_loss: negative label in batch");
        const auto q = smooth_targets(static_cast<std::size_t>(labels[i]), cfg);
        std::copy(q.begin(), q.end(), targets.begin() + i * n);
    }

    // softmax saved for the backward rule
    std::vector<double> softmax(b * n);
    double acc = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double* row = logits.values().data() + i * n;
        double m = row[0];
        for (std::size_t j = 1; j < n; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - m);
        const double lse = m + std::log(z);
        double weighted = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            softmax[i * n + j] = std::exp(row[j] - m) / z;
            weighted += targets[i * n + j] * row[j];
        }
        acc += lse - weighted;  // = -sum_j q_j * log softmax_j
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(b));

    auto ln = logits.node(), on = out.node();
    if (logits.requires_grad()) {
        out.set_requires_grad(true);
        if (Graph* g = Graph::current())
            g->record({ln, on},
                      [ln, on, softmax = std::move(softmax), targets = std::move(targets), b, n]() {
                          if (!ln->requires_grad) return;
                          ln->ensure_grad();
                          const double scale = on->grad[0] / static_cast<double>(b);
                          for (std::size_t i = 0; i < b * n; ++i)
                              ln->grad[i] += scale * (softmax[i] - targets[i]);
                      });
    }
    return out;
}

double triplet_hinge(double d_p, double d_n, double margin) {
    return std::max(d_p - d_n + margin, 0.0);
}

Tensor batch_hard_triplet(const Tensor& features, const std::vector<int>& labels,
                          const TripletConfig& cfg) {
    if (cfg.margin < 0.0)
        throw ConfigError("batch_hard_triplet: margin must be non-negative");
    if (features.rank() != 2)
        throw ShapeError("batch_hard_triplet: expected (B,D) features, got " +
                         format_shape(features.shape()));
    const std::size_t b = features.dim(0), d = features.dim(1);
    if (labels.size() != b)
        throw ShapeError("batch_hard_triplet: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(b));
    bool multiple_ids = false;
    for (std::size_t i = 1; i < b; ++i) multiple_ids = multiple_ids || labels[i] != labels[0];
    if (!multiple_ids)
        throw DataError("batch_hard_triplet: batch holds a single identity, no negatives exist");

    const auto& f = features.values();
    std::vector<double> dist(b * b, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = i + 1; j < b; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = f[i * d + k] - f[j * d + k];
                acc += diff * diff;
            }
            dist[i * b + j] = dist[j * b + i] = std::sqrt(acc);
        }

    struct AnchorPick {
        std::size_t pos, neg;
        bool active;  // hinge positive: contributes gradient
    };
    std::vector<AnchorPick> picks(b, {0, 0, false});
    double loss = 0.0;
    std::size_t counted = 0;
    for (std::size_t a = 0; a < b; ++a) {
        bool has_pos = false;
        std::size_t hardest_pos = 0, hardest_neg = 0;
        double dp = -1.0, dn = 0.0;
        bool has_neg = false;
        for (std::size_t j = 0; j < b; ++j) {
            if (j == a) continue;
            const double dij = dist[a * b + j];
            if (labels[j] == labels[a]) {
                if (!has_pos || dij > dp) {
                    has_pos = true;
                    dp = dij;
                    hardest_pos = j;
                }
            } else if (!has_neg || dij < dn) {
                has_neg = true;
                dn = dij;
                hardest_neg = j;
            }
        }
        if (!has_pos) continue;  // anchor skipped, not zero-padded
        ++counted;
        const double hinge = triplet_hinge(dp, dn, cfg.margin);
        loss += hinge;
        picks[a] = {hardest_pos, hardest_neg, hinge > 0.0};
    }
    if (counted == 0)
        throw DataError("batch_hard_triplet: no anchor has a positive in this batch");
    Tensor out = Tensor::scalar(loss / static_cast<double>(counted));

    auto fn = features.node(), on = out.node();
    if (features.requires_grad()) {
        out.set_requires_grad(true);
        if (Graph* g = Graph::current())
            g->record({fn, on}, [fn, on, picks = std::move(picks), dist = std::move(dist),
                                 counted, b, d]() {
                if (!fn->requires_grad) return;
                fn->ensure_grad();
                const double u = on->grad[0] / static_cast<double>(counted);
                const auto& v = fn->value;
                auto& gr = fn->grad;
                auto add_pair = [&](std::size_t i, std::size_t j, double coeff) {
                    // coeff * d||f_i - f_j|| applied to both endpoints
                    const double dij = dist[i * b + j];
                    if (dij < 1e-12) return;  // coincident points: zero subgradient
                    const double s = coeff / dij;
                    for (std::size_t k = 0; k < d; ++k) {
                        const double diff = v[i * d + k] - v[j * d + k];
                        gr[i * d + k] += s * diff;
                        gr[j * d + k] -= s * diff;
                    }
                };
                for (std::size_t a = 0; a < b; ++a) {
                    if (!picks[a].active) continue;
                    add_pair(a, picks[a].pos, u);    // +d_p
                    add_pair(a, picks[a].neg, -u);   // -d_n
                }
            });
    }
    return out;
}

CenterBank::CenterBank(std::size_t num_classes, std::size_t feature_dim)
    : centers(Tensor::zeros({num_classes, feature_dim})) {}

Tensor center_loss(const Tensor& features, const std::vector<int>& labels,
                   const CenterBank& bank) {
    if (features.rank() != 2 || features.dim(1) != bank.feature_dim())
        throw ShapeError("center_loss: features " + format_shape(features.shape()) +
                         " do not match centers " + format_shape(bank.centers.shape()));
    const std::size_t b = features.dim(0), d = features.dim(1);
    if (labels.size() != b)
        throw ShapeError("center_loss: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(b));
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= bank.num_classes())
            throw DataError("center_loss: label " + std::to_string(y) + " has no center (bank holds " +
                            std::to_string(bank.num_classes()) + ")");

    const auto& f = features.values();
    const auto& c = bank.centers.values();
    double acc = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
        const std::size_t y = static_cast<std::size_t>(labels[j]);
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = f[j * d + k] - c[y * d + k];
            acc += diff * diff;
        }
    }
    Tensor out = Tensor::scalar(0.5 * acc);

    auto fn = features.node(), cn = bank.centers.node(), on = out.node();
    if (features.requires_grad() || bank.centers.requires_grad()) {
        out.set_requires_grad(true);
        if (Graph* g = Graph::current())
            g->record({fn, cn, on}, [fn, cn, on, labels, b, d]() {
                const double u = on->grad[0];
                if (fn->requires_grad) {
                    fn->ensure_grad();
                    for (std::size_t j = 0; j < b; ++j) {
                        const std::size_t y = static_cast<std::size_t>(labels[j]);
                        for (std::size_t k = 0; k < d; ++k)
                            fn->grad[j * d + k] +=
                                u * (fn->value[j * d + k] - cn->value[y * d + k]);
                    }
                }
                if (cn->requires_grad) {
                    cn->ensure_grad();
                    for (std::size_t j = 0; j < b; ++j) {
                        const std::size_t y = static_cast<std::size_t>(labels[j]);
                        for (std::size_t k = 0; k < d; ++k)
                            cn->grad[y * d + k] +=
                                u * (cn->value[y * d + k] - fn->value[j * d + k]);
                    }
                }
            });
    }
    return out;
}

void update_centers(CenterBank& bank, const Tensor& features, const std::vector<int>& labels) {
    const std::size_t b = features.dim(0), d = bank.feature_dim();
    if (features.rank() != 2 || features.dim(1) != d || labels.size() != b)
        throw ShapeError("update_centers: features " + format_shape(features.shape()) +
                         " incompatible with centers " + format_shape(bank.centers.shape()));
    std::vector<std::size_t> count(bank.num_classes(), 0);
    std::vector<double> sum(bank.num_classes() * d, 0.0);
    for (std::size_t j = 0; j < b; ++j) {
        if (labels[j] < 0 || static_cast<std::size_t>(labels[j]) >= bank.num_classes())
            throw DataError("update_centers: label " + std::to_string(labels[j]) +
                            " has no center");
        const std::size_t y = static_cast<std::size_t>(labels[j]);
        ++count[y];
        for (std::size_t k = 0; k < d; ++k) sum[y * d + k] += features.values()[j * d + k];
    }
    auto& c = bank.centers.values();
    for (std::size_t y = 0; y < bank.num_classes(); ++y) {
        if (count[y] == 0) continue;
        const double denom = 1.0 + static_cast<double>(count[y]);
        for (std::size_t k = 0; k < d; ++k) {
            const double delta =
                (static_cast<double>(count[y]) * c[y * d + k] - sum[y * d + k]) / denom;
            c[y * d + k] -= bank.center_lr * delta;
        }
    }
}

TotalLoss total_loss(const LossTerms& terms, const LossWeights& weights) {
    if (weights.beta < 0.0) throw ConfigError("total_loss: beta must be non-negative");
    TotalLoss result;
    std::optional<Tensor> acc;
    auto accumulate = [&acc](const Tensor& t) { acc = acc ? add(*acc, t) : t; };
    if (terms.id) {
        result.id = terms.id->item();
        accumulate(*terms.id);
    }
    if (terms.triplet) {
        result.triplet = terms.triplet->item();
        accumulate(*terms.triplet);
    }
    if (terms.center) {
        result.center = terms.center->item();
        accumulate(scale(*terms.center, weights.beta));
    }
    result.total = acc ? *acc : Tensor::scalar(0.0);
    return result;
}

}  // namespace reidkit
