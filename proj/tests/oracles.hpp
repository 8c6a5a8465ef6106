// Test-side reference implementations, written independently of the
// library code paths they check.
#pragma once

#include <cstddef>
#include <vector>

namespace oracles {

struct RetrievalResult {
    std::vector<double> cmc;
    double map = 0.0;
    std::size_t used = 0, dropped = 0;
};

// Straightforward single-query protocol: same-id/same-camera exclusion
// (when cameras present on both sides), junk (-1) exclusion, ties by
// gallery index, precision averaged at match ranks.
RetrievalResult evaluate(const std::vector<std::vector<double>>& dist,
                         const std::vector<int>& query_ids, const std::vector<int>& query_cams,
                         const std::vector<int>& gallery_ids,
                         const std::vector<int>& gallery_cams);

// Exhaustive batch-hard mining on non-squared Euclidean distances.
double batch_hard_triplet(const std::vector<std::vector<double>>& features,
                          const std::vector<int>& labels, double margin);

// Literal dense transcription of the published k-reciprocal re-ranking
// with local query expansion; embeddings are row vectors.
std::vector<std::vector<double>> rerank(const std::vector<std::vector<double>>& query,
                                        const std::vector<std::vector<double>>& gallery,
                                        bool cosine, std::size_t k1, std::size_t k2,
                                        double lambda);

}  // namespace oracles
