#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reidkit/errors.hpp"

namespace reidkit {

enum class Metric { Euclidean, Cosine };
Metric parse_metric(const std::string& name);
std::string to_string(Metric m);

// Plain row-major matrix for evaluation math; unlike Tensor it carries no
// gradient machinery and permits zero rows.
struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
};

struct LabeledEmbeddingSet {
    Mat embeddings;
    std::vector<int> identities;
    std::vector<int> cameras;  // empty when absent

    bool has_cameras() const { return !cameras.empty(); }
    std::size_t size() const { return embeddings.rows; }
    std::size_t dim() const { return embeddings.cols; }
};

// Euclidean is the non-squared L2 distance; cosine is 1 - a.b/(|a||b|).
// Cosine rejects zero-norm rows, naming the offending row.
Mat distance_matrix(const Mat& a, const Mat& b, Metric metric);

struct ClusterStats {
    double intra = 0.0;  // mean distance over same-label pairs
    double inter = 0.0;  // mean distance over cross-label pairs
    double ratio = 0.0;  // intra / inter
};

struct NormStats {
    double mean = 0.0;
    double stddev = 0.0;            // population estimator
    std::optional<double> cv;       // stddev / mean; absent when mean == 0
};

struct RerankParams {
    std::size_t k1 = 20, k2 = 6;
    double lambda = 0.3;
};

struct EvalReport {
    std::vector<double> cmc;  // cmc[k-1] = fraction of queries matched within top k
    double map = 0.0;
    Metric metric = Metric::Euclidean;
    std::string feature = "f_i";
    std::size_t queries_used = 0;
    std::size_t queries_dropped = 0;  // no valid gallery match after exclusions
    std::optional<ClusterStats> cluster;  // pooled query+gallery, junk excluded
    NormStats norms;                      // pooled query+gallery, junk excluded
    std::optional<RerankParams> rerank;   // set when distances were re-ranked
};

// Single-query protocol: per query, gallery entries sharing both identity
// and camera are excluded (when both sets carry camera labels), junk
// entries (identity -1) never count, ranking ties break on ascending
// gallery index. CMC rank-k is the fraction of queries whose first valid
// match lands in the top k; AP averages precision at the ranks of the
// query's valid matches; mAP averages AP over queries that keep at least
// one valid match. Queries with none are dropped and counted.
EvalReport evaluate(const LabeledEmbeddingSet& query, const LabeledEmbeddingSet& gallery,
                    Metric metric);

// Same protocol on a precomputed |query| x |gallery| distance matrix.
EvalReport evaluate_distances(const Mat& dist, const LabeledEmbeddingSet& query,
                              const LabeledEmbeddingSet& gallery);

// Protocol on re-ranked distances, with the re-ranking parameters recorded
// in the report metadata.
EvalReport evaluate_reranked(const LabeledEmbeddingSet& query, const LabeledEmbeddingSet& gallery,
                             Metric metric, const RerankParams& params);

// k-reciprocal re-ranking: encodes reciprocal neighbor sets over the
// pooled query+gallery points, applies local query expansion with k2,
// and blends the resulting Jaccard distance with the original distance:
// d* = (1 - lambda) * d_J + lambda * d_original.
Mat rerank(const LabeledEmbeddingSet& query, const LabeledEmbeddingSet& gallery, Metric metric,
           const RerankParams& params);

// Reciprocal neighbor sets of a symmetric distance matrix: j is in R(i)
// iff each appears among the other's k nearest (self included, ties by
// index).
std::vector<std::vector<std::size_t>> k_reciprocal_neighbors(const Mat& dist, std::size_t k);

// Mean intra-class over mean inter-class pairwise distance, all unordered
// pairs enumerated. Needs >= 2 classes and >= 1 intra-class pair.
ClusterStats cluster_ratio(const Mat& embeddings, const std::vector<int>& labels, Metric metric);

NormStats norm_stats(const Mat& embeddings);

// (x, y, label) rows for external plotting; requires 2-D embeddings.
// Values print at full precision, so parsing them back is exact. A
// non-empty manifest hash becomes a leading comment line.
void export_embedding_scatter(const Mat& embeddings, const std::vector<int>& labels,
                              const std::filesystem::path& path,
                              const std::string& manifest_hash = "");

// Embedding container, one binary and one delimited-text form, both
// headed by magic, version, row/dim counts, label-presence flags and a
// free-form tag (runs store their manifest hash there).
void write_embeddings_binary(const std::filesystem::path& path, const LabeledEmbeddingSet& set,
                             const std::string& tag = "");
void write_embeddings_text(const std::filesystem::path& path, const LabeledEmbeddingSet& set,
                           const std::string& tag = "");
LabeledEmbeddingSet read_embeddings(const std::filesystem::path& path, std::string* tag = nullptr);

void write_eval_report(const std::filesystem::path& path, const EvalReport& report,
                       const std::string& manifest_hash = "");

}  // namespace reidkit
