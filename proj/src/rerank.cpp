#include <algorithm>
#include <cmath>
#include <vector>

#include "reidkit/eval.hpp"

namespace reidkit {

namespace {

// argsort of one distance row, ties broken by ascending index
std::vector<std::size_t> argsort_row(const Mat& dist, std::size_t row) {
    std::vector<std::size_t> order(dist.cols);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double da = dist.at(row, a), db = dist.at(row, b);
        if (da != db) return da < db;
        return a < b;
    });
    return order;
}

std::vector<std::size_t> reciprocal_of(const std::vector<std::vector<std::size_t>>& rank,
                                       std::size_t i, std::size_t k) {
    // forward neighbors are the first k+1 ranks (self included)
    std::vector<std::size_t> result;
    for (std::size_t pos = 0; pos <= k; ++pos) {
        const std::size_t j = rank[i][pos];
        for (std::size_t back = 0; back <= k; ++back)
            if (rank[j][back] == i) {
                result.push_back(j);
                break;
            }
    }
    return result;
}

}  // namespace

std::vector<std::vector<std::size_t>> k_reciprocal_neighbors(const Mat& dist, std::size_t k) {
    if (dist.rows != dist.cols) throw ShapeError("k_reciprocal_neighbors: matrix must be square");
    if (k + 1 > dist.rows)
        throw ConfigError("k_reciprocal_neighbors: k exceeds the number of points");
    std::vector<std::vector<std::size_t>> rank(dist.rows);
    for (std::size_t i = 0; i < dist.rows; ++i) rank[i] = argsort_row(dist, i);
    std::vector<std::vector<std::size_t>> result(dist.rows);
    for (std::size_t i = 0; i < dist.rows; ++i) result[i] = reciprocal_of(rank, i, k);
    return result;
}

Mat rerank(const LabeledEmbeddingSet& query, const LabeledEmbeddingSet& gallery, Metric metric,
           const RerankParams& params) {
    if (params.k2 < 1 || params.k1 <= params.k2)
        throw ConfigError("rerank: requires k1 > k2 >= 1, got k1=" + std::to_string(params.k1) +
                          " k2=" + std::to_string(params.k2));
    if (params.lambda < 0.0 || params.lambda > 1.0)
        throw ConfigError("rerank: lambda must lie in [0, 1]");
    if (params.k1 >= gallery.size())
        throw ConfigError("rerank: k1=" + std::to_string(params.k1) +
                          " must be smaller than the gallery size " +
                          std::to_string(gallery.size()));
    if (query.dim() != gallery.dim())
        throw ShapeError("rerank: dimensionality mismatch, " + std::to_string(query.dim()) +
                         " vs " + std::to_string(gallery.dim()));

    const std::size_t nq = query.size(), ng = gallery.size(), all = nq + ng;

    Mat pooled(all, query.dim());
    std::copy(query.embeddings.data.begin(), query.embeddings.data.end(), pooled.data.begin());
    std::copy(gallery.embeddings.data.begin(), gallery.embeddings.data.end(),
              pooled.data.begin() + nq * query.dim());

    // squared distances, each row scaled to max 1 (positive per-row scaling,
    // so per-row rankings are those of the input metric)
    Mat dist = distance_matrix(pooled, pooled, metric);
    for (double& v : dist.data) v *= v;
    for (std::size_t i = 0; i < all; ++i) {
        double rowmax = 0.0;
        for (std::size_t j = 0; j < all; ++j) rowmax = std::max(rowmax, dist.at(i, j));
        if (rowmax > 0.0)
            for (std::size_t j = 0; j < all; ++j) dist.at(i, j) /= rowmax;
    }

    std::vector<std::vector<std::size_t>> rank(all);
    for (std::size_t i = 0; i < all; ++i) rank[i] = argsort_row(dist, i);

    // round-half-to-even matches the published algorithm's rounding
    const auto half = static_cast<std::size_t>(std::nearbyint(static_cast<double>(params.k1) / 2.0));

    Mat v(all, all);
    std::vector<std::size_t> expansion;
    for (std::size_t i = 0; i < all; ++i) {
        const std::vector<std::size_t> recip = reciprocal_of(rank, i, params.k1);
        expansion = recip;
        for (std::size_t q : recip) {
            const std::vector<std::size_t> candidate = reciprocal_of(rank, q, half);
            std::size_t common = 0;
            for (std::size_t c : candidate)
                if (std::find(recip.begin(), recip.end(), c) != recip.end()) ++common;
            if (3 * common > 2 * candidate.size())
                expansion.insert(expansion.end(), candidate.begin(), candidate.end());
        }
        std::sort(expansion.begin(), expansion.end());
        expansion.erase(std::unique(expansion.begin(), expansion.end()), expansion.end());

        double total = 0.0;
        for (std::size_t j : expansion) total += std::exp(-dist.at(i, j));
        for (std::size_t j : expansion) v.at(i, j) = std::exp(-dist.at(i, j)) / total;
    }

    // local query expansion: average the encoding over the k2 nearest rows
    if (params.k2 != 1) {
        Mat vq(all, all);
        for (std::size_t i = 0; i < all; ++i) {
            for (std::size_t pos = 0; pos < params.k2; ++pos) {
                const double* src = v.row(rank[i][pos]);
                double* dst = vq.data.data() + i * all;
                for (std::size_t j = 0; j < all; ++j) dst[j] += src[j];
            }
            for (std::size_t j = 0; j < all; ++j) vq.at(i, j) /= static_cast<double>(params.k2);
        }
        v = std::move(vq);
    }

    std::vector<std::vector<std::size_t>> inverted(all);
    for (std::size_t i = 0; i < all; ++i)
        for (std::size_t j = 0; j < all; ++j)
            if (v.at(i, j) != 0.0) inverted[j].push_back(i);

    Mat final_dist(nq, ng);
    std::vector<double> overlap(all);
    for (std::size_t i = 0; i < nq; ++i) {
        std::fill(overlap.begin(), overlap.end(), 0.0);
        for (std::size_t k = 0; k < all; ++k) {
            const double vik = v.at(i, k);
            if (vik == 0.0) continue;
            for (std::size_t j : inverted[k]) overlap[j] += std::min(vik, v.at(j, k));
        }
        for (std::size_t g = 0; g < ng; ++g) {
            const double jaccard = 1.0 - overlap[nq + g] / (2.0 - overlap[nq + g]);
            final_dist.at(i, g) =
                (1.0 - params.lambda) * jaccard + params.lambda * dist.at(i, nq + g);
        }
    }
    return final_dist;
}

}  // namespace reidkit
