#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "reidkit/data.hpp"
#include "reidkit/eval.hpp"
#include "reidkit/model.hpp"
#include "reidkit/train.hpp"

namespace reidkit {

// Flat key-value description of one run: dataset, model, tricks, schedule
// and evaluation requests. Together with the code version it fully
// determines every artifact the run produces.
struct Manifest {
    std::map<std::string, std::string> values;

    static Manifest load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values.count(key) != 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
};

// FNV-1a over the sorted key=value lines, printed as 16 hex digits.
std::string manifest_hash(const Manifest& m);

void write_manifest(const std::filesystem::path& path, const Manifest& m);

// Rejects keys outside the documented set, naming the offender.
void validate_manifest_keys(const Manifest& m);

// Cumulative trick ladder; applying a rung configures it and every rung
// before it. "full" is an alias for the last rung.
const std::vector<std::string>& ablation_ladder();
void apply_preset(Manifest& m, const std::string& preset);

TrainConfig train_config_from(const Manifest& m);

struct ExperimentData {
    IdentityDataset train, query, gallery;
};
ExperimentData load_experiment_data(const Manifest& m);

struct EvalRequest {
    FeatureKind feature = FeatureKind::FI;
    Metric metric = Metric::Cosine;
    bool rerank = false;
    RerankParams rerank_params;
};
std::vector<EvalRequest> eval_requests_from(const Manifest& m);

// Eval-mode embedding of a whole dataset, applying the model's stored
// input normalization. Batch partitioning cannot affect the result.
LabeledEmbeddingSet embed_dataset(Model& model, const IdentityDataset& dataset, FeatureKind kind,
                                  std::size_t batch_size = 64);

std::filesystem::path run_dir_for(const Manifest& m);

struct TrainRunOutput {
    std::filesystem::path dir, checkpoint, log_path;
    TrainingLog log;
};
// Trains per the manifest and writes checkpoint.bin, trainlog.tsv and the
// resolved manifest under the run directory. Divergence still writes the
// artifacts; the caller inspects log.diverged.
TrainRunOutput run_train(const Manifest& m);

struct EvalRunOutput {
    std::vector<std::filesystem::path> report_paths;
    std::vector<EvalRequest> requests;
    std::vector<EvalReport> reports;
};
EvalRunOutput run_eval(const Manifest& m, const std::filesystem::path& checkpoint = {});

struct SweepRow {
    FeatureKind feature = FeatureKind::FT;
    double beta = 0.0, rank1 = 0.0, map = 0.0, r_ratio = 0.0;
};
// Trains once per beta (center loss enabled) and evaluates both features;
// rows come out grouped by feature, beta ascending, mirrored to
// sweep_beta.tsv.
std::vector<SweepRow> run_sweep_beta(const Manifest& base, const std::vector<double>& betas);

struct AblationRow {
    std::string preset;
    double rank1 = 0.0, map = 0.0;
};
// Runs every rung of the ladder; BN-neck rungs evaluate (f_i, cosine),
// plain rungs (f_t, euclidean). Mirrored to ablation.tsv.
std::vector<AblationRow> run_ablation(const Manifest& base);

// 2-D embeddings of the evaluation pool as scatter rows for plotting.
std::filesystem::path run_export_scatter(const Manifest& m, FeatureKind kind,
                                         const std::filesystem::path& checkpoint = {});

}  // namespace reidkit
