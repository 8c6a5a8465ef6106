#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "reidkit/tensor.hpp"

namespace reidkit {

// ---- Identity loss with label smoothing ------------------------------------

struct LabelSmoothConfig {
    double epsilon = 0.1;      // 0 disables smoothing (one-hot targets)
    std::size_t num_classes = 0;
};

// Softened target distribution: the true class gets 1 - epsilon*(N-1)/N,
// every other class epsilon/N. Sums to 1 for any valid (N, epsilon).
std::vector<double> smooth_targets(std::size_t y, const LabelSmoothConfig& cfg);

// Mean over the batch of cross-entropy between smoothed targets and
// softmax(logits), computed in log-sum-exp stabilized form.
Tensor id_loss(const Tensor& logits, const std::vector<int>& labels,
               const LabelSmoothConfig& cfg);

// ---- Batch-hard triplet loss ------------------------------------------------

struct TripletConfig {
    double margin = 0.3;
};

// Hinge on one (d_p, d_n) pair: max(d_p - d_n + margin, 0).
double triplet_hinge(double d_p, double d_n, double margin);

// Batch-hard mining over non-squared Euclidean distances: per anchor,
// d_p is the farthest same-label other sample and d_n the closest
// different-label sample. Anchors without a positive are skipped; the loss
// is the mean hinge over the remaining anchors. Hardest-pair ties resolve
// to the lowest sample index so gradients are deterministic.
Tensor batch_hard_triplet(const Tensor& features, const std::vector<int>& labels,
                          const TripletConfig& cfg);

// ---- Center loss -------------------------------------------------------------

// One learned center per training identity. Centers never receive weight
// decay. By default they move by the count-normalized rule in
// update_centers(); with via_optimizer set they instead track gradients
// and learn through the main optimizer.
struct CenterBank {
    Tensor centers;  // (num_classes, feature_dim)
    double center_lr = 0.5;
    bool via_optimizer = false;

    CenterBank(std::size_t num_classes, std::size_t feature_dim);
    std::size_t num_classes() const { return centers.dim(0); }
    std::size_t feature_dim() const { return centers.dim(1); }
};

// (1/2) * sum over the batch of ||f_j - c_{y_j}||^2.
Tensor center_loss(const Tensor& features, const std::vector<int>& labels,
                   const CenterBank& bank);

// c <- c - center_lr * delta(c), delta(c) = sum_{j: y_j = c}(c - f_j) / (1 + count_c).
// Centers without batch members are unchanged.
void update_centers(CenterBank& bank, const Tensor& features, const std::vector<int>& labels);

// ---- Composition --------------------------------------------------------------

struct LossWeights {
    double beta = 0.0005;  // center-loss weight
};

struct LossTerms {
    std::optional<Tensor> id;
    std::optional<Tensor> triplet;
    std::optional<Tensor> center;
};

struct TotalLoss {
    Tensor total;
    double id = 0.0, triplet = 0.0, center = 0.0;  // component values for curve logging
};

// total = L_ID + L_Tri + beta * L_C over whichever terms are present.
TotalLoss total_loss(const LossTerms& terms, const LossWeights& weights);

}  // namespace reidkit
