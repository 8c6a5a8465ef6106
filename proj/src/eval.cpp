#include "reidkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "reidkit/data.hpp"
#include "reidkit/kernels.hpp"

namespace reidkit {

Metric parse_metric(const std::string& name) {
    if (name == "euclidean") return Metric::Euclidean;
    if (name == "cosine") return Metric::Cosine;
    throw ConfigError("unknown metric: " + name);
}

std::string to_string(Metric m) { return m == Metric::Euclidean ? "euclidean" : "cosine"; }

namespace {

void check_nonzero_rows(const Mat& m, const char* which) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) acc += m.at(i, j) * m.at(i, j);
        if (acc == 0.0)
            throw DataError(std::string("cosine distance: zero-norm vector at row ") +
                            std::to_string(i) + " of the " + which + " set");
    }
}

std::string fmt_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

Mat distance_matrix(const Mat& a, const Mat& b, Metric metric) {
    if (a.cols != b.cols)
        throw ShapeError("distance_matrix: dimensionality mismatch, " + std::to_string(a.cols) +
                         " vs " + std::to_string(b.cols));
    Mat out(a.rows, b.rows);
    if (a.rows == 0 || b.rows == 0) return out;
    if (metric == Metric::Euclidean) {
        kernels::pairwise_euclidean(a.data.data(), a.rows, b.data.data(), b.rows, a.cols,
                                    out.data.data());
    } else {
        check_nonzero_rows(a, "first");
        check_nonzero_rows(b, "second");
        kernels::pairwise_cosine(a.data.data(), a.rows, b.data.data(), b.rows, a.cols,
                                 out.data.data());
    }
    return out;
}

EvalReport evaluate_distances(const Mat& dist, const LabeledEmbeddingSet& query,
                              const LabeledEmbeddingSet& gallery) {
    if (dist.rows != query.size() || dist.cols != gallery.size())
        throw ShapeError("evaluate: distance matrix is " + std::to_string(dist.rows) + "x" +
                         std::to_string(dist.cols) + " for " + std::to_string(query.size()) +
                         " queries and " + std::to_string(gallery.size()) + " gallery entries");
    const bool camera_filter = query.has_cameras() && gallery.has_cameras();

    EvalReport report;
    report.cmc.assign(gallery.size(), 0.0);
    double ap_sum = 0.0;
    std::vector<std::size_t> first_match_hist(gallery.size() + 1, 0);

    std::vector<std::size_t> order(gallery.size());
    for (std::size_t q = 0; q < query.size(); ++q) {
        const int qid = query.identities[q];
        if (qid == kJunkIdentity) {
            ++report.queries_dropped;
            continue;
        }
        // candidate list: junk and same-id/same-camera entries removed
        order.clear();
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            if (gallery.identities[g] == kJunkIdentity) continue;
            if (camera_filter && gallery.identities[g] == qid &&
                gallery.cameras[g] == query.cameras[q])
                continue;
            order.push_back(g);
        }
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double da = dist.at(q, a), db = dist.at(q, b);
            if (da != db) return da < db;
            return a < b;  // documented stable tie rule
        });

        std::size_t matches = 0, first_rank = 0;
        double ap = 0.0;
        for (std::size_t rank = 1; rank <= order.size(); ++rank) {
            if (gallery.identities[order[rank - 1]] != qid) continue;
            ++matches;
            if (matches == 1) first_rank = rank;
            ap += static_cast<double>(matches) / static_cast<double>(rank);
        }
        if (matches == 0) {
            ++report.queries_dropped;
            continue;
        }
        ++report.queries_used;
        ap_sum += ap / static_cast<double>(matches);
        ++first_match_hist[first_rank];
    }

    if (report.queries_used > 0) {
        report.map = ap_sum / static_cast<double>(report.queries_used);
        std::size_t cum = 0;
        for (std::size_t k = 1; k <= gallery.size(); ++k) {
            cum += first_match_hist[k];
            report.cmc[k - 1] = static_cast<double>(cum) / static_cast<double>(report.queries_used);
        }
    }
    return report;
}

namespace {

// pooled non-junk embeddings with their labels, for the report statistics
void pool_non_junk(const LabeledEmbeddingSet& a, const LabeledEmbeddingSet& b, Mat& out,
                   std::vector<int>& labels) {
    out = Mat(0, a.dim());
    std::vector<double> rows;
    for (const LabeledEmbeddingSet* set : {&a, &b})
        for (std::size_t i = 0; i < set->size(); ++i) {
            if (set->identities[i] == kJunkIdentity) continue;
            const double* r = set->embeddings.row(i);
            rows.insert(rows.end(), r, r + set->dim());
            labels.push_back(set->identities[i]);
        }
    out.rows = labels.size();
    out.cols = a.dim();
    out.data = std::move(rows);
}

}  // namespace

namespace {

void fill_embedding_stats(EvalReport& report, const LabeledEmbeddingSet& query,
                          const LabeledEmbeddingSet& gallery, Metric metric) {
    Mat pooled;
    std::vector<int> labels;
    pool_non_junk(query, gallery, pooled, labels);
    if (pooled.rows == 0) return;
    report.norms = norm_stats(pooled);
    bool two_classes = false, intra_pair = false;
    for (std::size_t i = 1; i < labels.size(); ++i) {
        two_classes = two_classes || labels[i] != labels[0];
        for (std::size_t j = 0; j < i && !intra_pair; ++j) intra_pair = labels[i] == labels[j];
        if (two_classes && intra_pair) break;
    }
    if (two_classes && intra_pair) report.cluster = cluster_ratio(pooled, labels, metric);
}

}  // namespace

EvalReport evaluate(const LabeledEmbeddingSet& query, const LabeledEmbeddingSet& gallery,
                    Metric metric) {
    const Mat dist = distance_matrix(query.embeddings, gallery.embeddings, metric);
    EvalReport report = evaluate_distances(dist, query, gallery);
    report.metric = metric;
    fill_embedding_stats(report, query, gallery, metric);
    return report;
}

EvalReport evaluate_reranked(const LabeledEmbeddingSet& query, const LabeledEmbeddingSet& gallery,
                             Metric metric, const RerankParams& params) {
    const Mat dist = rerank(query, gallery, metric, params);
    EvalReport report = evaluate_distances(dist, query, gallery);
    report.metric = metric;
    report.rerank = params;
    fill_embedding_stats(report, query, gallery, metric);
    return report;
}

ClusterStats cluster_ratio(const Mat& embeddings, const std::vector<int>& labels, Metric metric) {
    if (labels.size() != embeddings.rows)
        throw ShapeError("cluster_ratio: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(embeddings.rows) + " embeddings");
    const Mat dist = distance_matrix(embeddings, embeddings, metric);
    double intra = 0.0, inter = 0.0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < embeddings.rows; ++i)
        for (std::size_t j = i + 1; j < embeddings.rows; ++j) {
            if (labels[i] == labels[j]) {
                intra += dist.at(i, j);
                ++n_intra;
            } else {
                inter += dist.at(i, j);
                ++n_inter;
            }
        }
    if (n_inter == 0)
        throw DataError("cluster_ratio: a single class leaves the inter-class distance undefined");
    if (n_intra == 0)
        throw DataError("cluster_ratio: no same-label pair exists");
    ClusterStats stats;
    stats.intra = intra / static_cast<double>(n_intra);
    stats.inter = inter / static_cast<double>(n_inter);
    stats.ratio = stats.intra / stats.inter;
    return stats;
}

NormStats norm_stats(const Mat& embeddings) {
    if (embeddings.rows == 0) throw DataError("norm_stats: empty embedding set");
    std::vector<double> norms(embeddings.rows);
    for (std::size_t i = 0; i < embeddings.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < embeddings.cols; ++j)
            acc += embeddings.at(i, j) * embeddings.at(i, j);
        norms[i] = std::sqrt(acc);
    }
    NormStats stats;
    for (double n : norms) stats.mean += n;
    stats.mean /= static_cast<double>(norms.size());
    double var = 0.0;
    for (double n : norms) var += (n - stats.mean) * (n - stats.mean);
    var /= static_cast<double>(norms.size());
    stats.stddev = std::sqrt(var);
    if (stats.mean != 0.0) stats.cv = stats.stddev / stats.mean;
    return stats;
}

void export_embedding_scatter(const Mat& embeddings, const std::vector<int>& labels,
                              const std::filesystem::path& path,
                              const std::string& manifest_hash) {
    if (embeddings.cols != 2)
        throw ShapeError("scatter export needs 2-D embeddings, got dimension " +
                         std::to_string(embeddings.cols));
    if (labels.size() != embeddings.rows)
        throw ShapeError("scatter export: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(embeddings.rows) + " rows");
    std::ofstream os(path);
    if (!os) throw DataError("scatter export: cannot open " + path.string());
    if (!manifest_hash.empty()) os << "# manifest " << manifest_hash << '\n';
    os << "x\ty\tlabel\n";
    for (std::size_t i = 0; i < embeddings.rows; ++i)
        os << fmt_full(embeddings.at(i, 0)) << '\t' << fmt_full(embeddings.at(i, 1)) << '\t'
           << labels[i] << '\n';
    if (!os) throw DataError("scatter export: write failed for " + path.string());
}

// ---- Embedding files -----------------------------------------------------

namespace {

constexpr char kEmbMagic[8] = {'R', 'K', 'E', 'M', 'B', '0', '0', '1'};
constexpr const char* kEmbTextMagic = "RKEMB-TEXT";

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("embeddings: truncated file");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void validate_set(const LabeledEmbeddingSet& set) {
    if (set.identities.size() != set.size())
        throw ShapeError("embeddings: " + std::to_string(set.identities.size()) + " labels for " +
                         std::to_string(set.size()) + " rows");
    if (set.has_cameras() && set.cameras.size() != set.size())
        throw ShapeError("embeddings: camera labels incomplete");
}

}  // namespace

void write_embeddings_binary(const std::filesystem::path& path, const LabeledEmbeddingSet& set,
                             const std::string& tag) {
    validate_set(set);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("embeddings: cannot open " + path.string() + " for writing");
    os.write(kEmbMagic, sizeof kEmbMagic);
    put_u32(os, 1);  // version
    put_u32(os, static_cast<std::uint32_t>(set.size()));
    put_u32(os, static_cast<std::uint32_t>(set.dim()));
    os.put(1);  // identities present
    os.put(set.has_cameras() ? 1 : 0);
    put_u32(os, static_cast<std::uint32_t>(tag.size()));
    os.write(tag.data(), static_cast<std::streamsize>(tag.size()));
    for (double v : set.embeddings.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        os.write(reinterpret_cast<const char*>(b), 8);
    }
    for (int id : set.identities) put_u32(os, static_cast<std::uint32_t>(id));
    if (set.has_cameras())
        for (int cam : set.cameras) put_u32(os, static_cast<std::uint32_t>(cam));
    if (!os) throw DataError("embeddings: write failed for " + path.string());
}

void write_embeddings_text(const std::filesystem::path& path, const LabeledEmbeddingSet& set,
                           const std::string& tag) {
    validate_set(set);
    std::ofstream os(path);
    if (!os) throw DataError("embeddings: cannot open " + path.string() + " for writing");
    os << kEmbTextMagic << " 1 " << set.size() << ' ' << set.dim() << " 1 "
       << (set.has_cameras() ? 1 : 0) << ' ' << (tag.empty() ? "-" : tag) << '\n';
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (std::size_t j = 0; j < set.dim(); ++j) {
            if (j) os << '\t';
            os << fmt_full(set.embeddings.at(i, j));
        }
        os << '\t' << set.identities[i];
        if (set.has_cameras()) os << '\t' << set.cameras[i];
        os << '\n';
    }
    if (!os) throw DataError("embeddings: write failed for " + path.string());
}

LabeledEmbeddingSet read_embeddings(const std::filesystem::path& path, std::string* tag) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("embeddings: cannot open " + path.string());
    char magic[8];
    if (!is.read(magic, sizeof magic)) throw DataError("embeddings: truncated file");

    LabeledEmbeddingSet set;
    if (std::memcmp(magic, kEmbMagic, sizeof kEmbMagic) == 0) {
        const std::uint32_t version = get_u32(is);
        if (version != 1)
            throw DataError("embeddings: unsupported version " + std::to_string(version));
        const std::uint32_t rows = get_u32(is), cols = get_u32(is);
        const int has_id = is.get(), has_cam = is.get();
        if (has_id == EOF || has_cam == EOF) throw DataError("embeddings: truncated header");
        const std::uint32_t tag_len = get_u32(is);
        std::string stored_tag(tag_len, '\0');
        if (tag_len && !is.read(stored_tag.data(), tag_len))
            throw DataError("embeddings: truncated header tag");
        if (tag) *tag = stored_tag;
        set.embeddings = Mat(rows, cols);
        for (double& v : set.embeddings.data) {
            unsigned char b[8];
            if (!is.read(reinterpret_cast<char*>(b), 8))
                throw DataError("embeddings: truncated data");
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
            std::memcpy(&v, &bits, sizeof v);
        }
        if (has_id)
            for (std::uint32_t i = 0; i < rows; ++i)
                set.identities.push_back(static_cast<int>(get_u32(is)));
        if (has_cam)
            for (std::uint32_t i = 0; i < rows; ++i)
                set.cameras.push_back(static_cast<int>(get_u32(is)));
        return set;
    }

    // not binary: re-read as text
    is.close();
    std::ifstream ts(path);
    std::string word;
    ts >> word;
    if (word != kEmbTextMagic)
        throw DataError("embeddings: " + path.string() + " has neither the binary nor text magic");
    std::size_t version = 0, rows = 0, cols = 0;
    int has_id = 0, has_cam = 0;
    std::string stored_tag;
    ts >> version >> rows >> cols >> has_id >> has_cam >> stored_tag;
    if (!ts || version != 1) throw DataError("embeddings: malformed text header");
    if (tag) *tag = stored_tag == "-" ? "" : stored_tag;
    set.embeddings = Mat(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j)
            if (!(ts >> set.embeddings.at(i, j)))
                throw DataError("embeddings: truncated text data at row " + std::to_string(i));
        if (has_id) {
            int id;
            ts >> id;
            set.identities.push_back(id);
        }
        if (has_cam) {
            int cam;
            ts >> cam;
            set.cameras.push_back(cam);
        }
        if (!ts) throw DataError("embeddings: truncated labels at row " + std::to_string(i));
    }
    return set;
}

void write_eval_report(const std::filesystem::path& path, const EvalReport& report,
                       const std::string& manifest_hash) {
    std::ofstream os(path);
    if (!os) throw DataError("report: cannot open " + path.string() + " for writing");
    if (!manifest_hash.empty()) os << "# manifest " << manifest_hash << '\n';
    os << "key\tvalue\n";
    os << "metric\t" << to_string(report.metric) << '\n';
    os << "feature\t" << report.feature << '\n';
    os << "queries_used\t" << report.queries_used << '\n';
    os << "queries_dropped\t" << report.queries_dropped << '\n';
    os << "mAP\t" << fmt_full(report.map) << '\n';
    if (report.cluster) {
        os << "intra_class_distance\t" << fmt_full(report.cluster->intra) << '\n';
        os << "inter_class_distance\t" << fmt_full(report.cluster->inter) << '\n';
        os << "r_ratio\t" << fmt_full(report.cluster->ratio) << '\n';
    }
    os << "norm_mean\t" << fmt_full(report.norms.mean) << '\n';
    os << "norm_stddev\t" << fmt_full(report.norms.stddev) << '\n';
    if (report.norms.cv) os << "norm_cv\t" << fmt_full(*report.norms.cv) << '\n';
    if (report.rerank) {
        os << "rerank_k1\t" << report.rerank->k1 << '\n';
        os << "rerank_k2\t" << report.rerank->k2 << '\n';
        os << "rerank_lambda\t" << fmt_full(report.rerank->lambda) << '\n';
    }
    for (std::size_t k = 1; k <= report.cmc.size(); ++k)
        os << "cmc_" << k << '\t' << fmt_full(report.cmc[k - 1]) << '\n';
    if (!os) throw DataError("report: write failed for " + path.string());
}

}  // namespace reidkit
