#include "reidkit/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace reidkit {

// ---- Manifest ---------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) parts.push_back(item);
    }
    return parts;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "run.id", "out.dir", "seed",
        "dataset.kind",
        "blobs.identities", "blobs.samples", "blobs.channels", "blobs.height", "blobs.width",
        "blobs.noise",
        "idx.train_images", "idx.train_labels", "idx.test_images", "idx.test_labels",
        "folder.train", "folder.query", "folder.gallery",
        "split.policy", "split.train_fraction", "split.queries_per_identity",
        "model.blocks", "model.feature_dim", "model.conv_bias", "model.classifier_bias",
        "model.downsample",
        "neck",
        "trick.warmup", "trick.rea", "trick.label_smooth", "trick.stride1", "trick.center",
        "loss.margin", "loss.epsilon", "loss.beta",
        "center.lr", "center.via_optimizer",
        "schedule.base_lr", "schedule.warmup_epochs", "schedule.decay_epochs",
        "schedule.decay_factors", "schedule.total_epochs", "schedule.time_scale",
        "sampler.p", "sampler.k",
        "rea.probability", "rea.area_low", "rea.area_high", "rea.aspect_low", "rea.fill",
        "optim.weight_decay", "optim.beta1", "optim.beta2", "optim.eps",
        "input.normalize", "train.init_checkpoint",
        "eval.features", "eval.metrics", "eval.rerank",
        "eval.rerank.k1", "eval.rerank.k2", "eval.rerank.lambda",
        "eval.export_embeddings", "eval.batch_size",
    };
    return keys;
}

}  // namespace

Manifest Manifest::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("manifest: cannot open " + path.string());
    Manifest m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("manifest: line " + std::to_string(lineno) +
                              " is not a key = value pair: " + stripped);
        m.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
    return m;
}

void Manifest::set(const std::string& key, const std::string& value) {
    if (key.empty()) throw ConfigError("manifest: empty key");
    values[key] = value;
}

std::string Manifest::get(const std::string& key, const std::string& fallback) const {
    const auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

double Manifest::get_double(const std::string& key, double fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("manifest: key " + key + " is not a number: " + it->second);
    }
}

std::size_t Manifest::get_size(const std::string& key, std::size_t fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(it->second, &pos);
        if (pos != it->second.size() || v < 0) throw std::invalid_argument("");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("manifest: key " + key + " is not a non-negative integer: " + it->second);
    }
}

std::uint64_t Manifest::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("manifest: key " + key + " is not an unsigned integer: " + it->second);
    }
}

bool Manifest::get_bool(const std::string& key, bool fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "on") return true;
    if (it->second == "false" || it->second == "0" || it->second == "off") return false;
    throw ConfigError("manifest: key " + key + " is not a boolean: " + it->second);
}

std::string manifest_hash(const Manifest& m) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& [k, v] : m.values) {
        mix(k);
        mix("=");
        mix(v);
        mix("\n");
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    std::ofstream os(path);
    if (!os) throw DataError("manifest: cannot open " + path.string() + " for writing");
    os << "# manifest " << manifest_hash(m) << '\n';
    for (const auto& [k, v] : m.values) os << k << " = " << v << '\n';
    if (!os) throw DataError("manifest: write failed for " + path.string());
}

void validate_manifest_keys(const Manifest& m) {
    for (const auto& [k, _] : m.values)
        if (known_keys().count(k) == 0) throw ConfigError("manifest: unknown key " + k);
}

const std::vector<std::string>& ablation_ladder() {
    static const std::vector<std::string> ladder = {
        "baseline-s", "+warmup", "+rea", "+ls", "+stride1", "+bnneck", "+center",
    };
    return ladder;
}

void apply_preset(Manifest& m, const std::string& preset) {
    const auto& ladder = ablation_ladder();
    const std::string wanted = preset == "full" ? ladder.back() : preset;
    const auto it = std::find(ladder.begin(), ladder.end(), wanted);
    if (it == ladder.end()) throw ConfigError("unknown preset: " + preset);
    const auto rung = static_cast<std::size_t>(it - ladder.begin());

    m.set("neck", "neck3");
    m.set("trick.warmup", "false");
    m.set("trick.rea", "false");
    m.set("trick.label_smooth", "false");
    m.set("trick.stride1", "false");
    m.set("trick.center", "false");
    if (rung >= 1) m.set("trick.warmup", "true");
    if (rung >= 2) m.set("trick.rea", "true");
    if (rung >= 3) m.set("trick.label_smooth", "true");
    if (rung >= 4) m.set("trick.stride1", "true");
    if (rung >= 5) m.set("neck", "bnneck");
    if (rung >= 6) m.set("trick.center", "true");
}

// ---- Config construction ---------------------------------------------------

TrainConfig train_config_from(const Manifest& m) {
    validate_manifest_keys(m);
    TrainConfig cfg;
    cfg.seed = m.get_u64("seed", 0);

    cfg.backbone.blocks.clear();
    const std::string mode_name = m.get("model.downsample", "conv");
    DownsampleMode mode;
    if (mode_name == "conv")
        mode = DownsampleMode::StrideConv;
    else if (mode_name == "maxpool")
        mode = DownsampleMode::MaxPool;
    else
        throw ConfigError("manifest: model.downsample must be conv or maxpool, got " + mode_name);
    for (const auto& part : split_list(m.get("model.blocks", "16,32,64"))) {
        try {
            cfg.backbone.blocks.push_back({static_cast<std::size_t>(std::stoull(part)), mode});
        } catch (const std::exception&) {
            throw ConfigError("manifest: model.blocks entry is not an integer: " + part);
        }
    }
    cfg.backbone.feature_dim = m.get_size("model.feature_dim", 64);
    cfg.backbone.conv_bias = m.get_bool("model.conv_bias", true);
    cfg.model_options.classifier_bias = m.get_bool("model.classifier_bias", false);

    cfg.neck = parse_neck_variant(m.get("neck", "neck3"));
    cfg.warmup = m.get_bool("trick.warmup", false);
    cfg.rea = m.get_bool("trick.rea", false);
    cfg.label_smooth = m.get_bool("trick.label_smooth", false);
    cfg.last_stride_one = m.get_bool("trick.stride1", false);
    cfg.center = m.get_bool("trick.center", false);

    cfg.triplet.margin = m.get_double("loss.margin", 0.3);
    cfg.label_smooth_epsilon = m.get_double("loss.epsilon", 0.1);
    cfg.weights.beta = m.get_double("loss.beta", 0.0005);
    cfg.center_lr = m.get_double("center.lr", 0.5);
    cfg.centers_via_optimizer = m.get_bool("center.via_optimizer", false);

    cfg.schedule.base_lr = m.get_double("schedule.base_lr", 3.5e-4);
    cfg.schedule.warmup_epochs = m.get_size("schedule.warmup_epochs", 10);
    cfg.schedule.decay_epochs.clear();
    for (const auto& part : split_list(m.get("schedule.decay_epochs", "40,70")))
        cfg.schedule.decay_epochs.push_back(static_cast<std::size_t>(std::stoull(part)));
    cfg.schedule.decay_factors.clear();
    for (const auto& part : split_list(m.get("schedule.decay_factors", "0.1,0.1")))
        cfg.schedule.decay_factors.push_back(std::stod(part));
    cfg.schedule.total_epochs = m.get_size("schedule.total_epochs", 120);
    cfg.schedule.time_scale = m.get_double("schedule.time_scale", 1.0);

    cfg.sampler.num_identities = m.get_size("sampler.p", 8);
    cfg.sampler.num_per_identity = m.get_size("sampler.k", 4);

    cfg.rea_cfg.probability = m.get_double("rea.probability", 0.5);
    cfg.rea_cfg.area_low = m.get_double("rea.area_low", 0.02);
    cfg.rea_cfg.area_high = m.get_double("rea.area_high", 0.4);
    cfg.rea_cfg.aspect_low = m.get_double("rea.aspect_low", 0.3);
    const std::string fill = m.get("rea.fill", "mean");
    if (fill == "mean")
        cfg.rea_cfg.fill = REAFill::ChannelMean;
    else if (fill == "zero")
        cfg.rea_cfg.fill = REAFill::Zero;
    else if (fill == "noise")
        cfg.rea_cfg.fill = REAFill::Noise;
    else
        throw ConfigError("manifest: rea.fill must be mean, zero or noise, got " + fill);

    cfg.adam.weight_decay = m.get_double("optim.weight_decay", 5e-4);
    cfg.adam.beta1 = m.get_double("optim.beta1", 0.9);
    cfg.adam.beta2 = m.get_double("optim.beta2", 0.999);
    cfg.adam.eps = m.get_double("optim.eps", 1e-8);
    cfg.normalize_input = m.get_bool("input.normalize", true);
    cfg.init_checkpoint = m.get("train.init_checkpoint", "");
    return cfg;
}

ExperimentData load_experiment_data(const Manifest& m) {
    validate_manifest_keys(m);
    ExperimentData data;
    const std::string kind = m.get("dataset.kind", "blobs");
    const std::uint64_t seed = m.get_u64("seed", 0);
    if (kind == "blobs") {
        SyntheticBlobConfig blob;
        blob.num_identities = m.get_size("blobs.identities", 8);
        blob.samples_per_identity = m.get_size("blobs.samples", 16);
        blob.channels = m.get_size("blobs.channels", 1);
        blob.height = m.get_size("blobs.height", 12);
        blob.width = m.get_size("blobs.width", 12);
        blob.noise_amplitude = m.get_double("blobs.noise", 0.08);
        blob.seed = seed;
        SplitPolicy policy;
        const std::string policy_name = m.get("split.policy", "identity-disjoint");
        if (policy_name == "identity-disjoint")
            policy.kind = SplitPolicyKind::IdentityDisjoint;
        else if (policy_name == "class-shared")
            policy.kind = SplitPolicyKind::ClassShared;
        else
            throw ConfigError("manifest: split.policy must be identity-disjoint or class-shared");
        policy.train_fraction = m.get_double("split.train_fraction", 0.7);
        policy.queries_per_identity = m.get_size("split.queries_per_identity", 2);
        policy.seed = seed;
        SplitResult parts = split(make_blobs(blob), policy);
        data.train = std::move(parts.train);
        data.query = std::move(parts.query);
        data.gallery = std::move(parts.gallery);
    } else if (kind == "idx") {
        for (const char* key : {"idx.train_images", "idx.train_labels", "idx.test_images",
                                "idx.test_labels"})
            if (!m.has(key)) throw ConfigError(std::string("manifest: missing key ") + key);
        data.train = load_idx(m.get("idx.train_images", ""), m.get("idx.train_labels", ""));
        IdentityDataset test = load_idx(m.get("idx.test_images", ""), m.get("idx.test_labels", ""));
        SplitResult qg =
            split_query_gallery(test, m.get_size("split.queries_per_identity", 10), seed);
        data.query = std::move(qg.query);
        data.gallery = std::move(qg.gallery);
    } else if (kind == "folder") {
        for (const char* key : {"folder.train", "folder.query", "folder.gallery"})
            if (!m.has(key)) throw ConfigError(std::string("manifest: missing key ") + key);
        data.train = load_image_folder(m.get("folder.train", ""));
        data.query = load_image_folder(m.get("folder.query", ""));
        data.gallery = load_image_folder(m.get("folder.gallery", ""));
    } else {
        throw ConfigError("manifest: dataset.kind must be blobs, idx or folder, got " + kind);
    }
    return data;
}

std::vector<EvalRequest> eval_requests_from(const Manifest& m) {
    std::vector<EvalRequest> requests;
    RerankParams rerank_params;
    rerank_params.k1 = m.get_size("eval.rerank.k1", 20);
    rerank_params.k2 = m.get_size("eval.rerank.k2", 6);
    rerank_params.lambda = m.get_double("eval.rerank.lambda", 0.3);
    const bool rerank = m.get_bool("eval.rerank", false);
    for (const auto& feature : split_list(m.get("eval.features", "fi")))
        for (const auto& metric : split_list(m.get("eval.metrics", "cosine"))) {
            EvalRequest req;
            req.feature = parse_feature_kind(feature);
            req.metric = parse_metric(metric);
            req.rerank = rerank;
            req.rerank_params = rerank_params;
            requests.push_back(req);
        }
    if (requests.empty()) throw ConfigError("manifest: eval.features/eval.metrics select nothing");
    return requests;
}

// ---- Embedding extraction ------------------------------------------------------

LabeledEmbeddingSet embed_dataset(Model& model, const IdentityDataset& dataset, FeatureKind kind,
                                  std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("embed_dataset: batch_size must be positive");
    LabeledEmbeddingSet set;
    set.embeddings = Mat(dataset.size(), model.config().feature_dim);
    set.identities = dataset.identities;
    set.cameras = dataset.cameras;

    const auto& mean = model.input_mean();
    const auto& stddev = model.input_std();
    const std::size_t plane = dataset.height * dataset.width;
    for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, dataset.size() - start);
        Tensor images = Tensor::zeros({count, dataset.channels, dataset.height, dataset.width});
        for (std::size_t b = 0; b < count; ++b)
            for (std::size_t c = 0; c < dataset.channels; ++c)
                for (std::size_t p = 0; p < plane; ++p)
                    images.values()[(b * dataset.channels + c) * plane + p] =
                        (dataset.images[start + b][c * plane + p] - mean[c]) / stddev[c];
        NeckOutput out = model.forward(images, RunMode::Eval);
        const Tensor& feat = out.feature(kind);
        std::copy(feat.values().begin(), feat.values().end(),
                  set.embeddings.data.begin() + start * model.config().feature_dim);
    }
    return set;
}

// ---- Run orchestration ------------------------------------------------------------

std::filesystem::path run_dir_for(const Manifest& m) {
    return std::filesystem::path(m.get("out.dir", "runs")) / m.get("run.id", "run");
}

TrainRunOutput run_train(const Manifest& m) {
    validate_manifest_keys(m);
    TrainRunOutput out;
    out.dir = run_dir_for(m);
    std::filesystem::create_directories(out.dir);

    ExperimentData data = load_experiment_data(m);
    TrainConfig cfg = train_config_from(m);
    TrainResult result = train(data.train, cfg);

    const std::string hash = manifest_hash(m);
    out.checkpoint = out.dir / "checkpoint.bin";
    out.log_path = out.dir / "trainlog.tsv";
    save_checkpoint(result.model, out.checkpoint, hash);
    write_training_log(out.log_path, result.log, hash);
    write_manifest(out.dir / "manifest.resolved", m);
    out.log = std::move(result.log);
    return out;
}

EvalRunOutput run_eval(const Manifest& m, const std::filesystem::path& checkpoint) {
    validate_manifest_keys(m);
    const std::filesystem::path dir = run_dir_for(m);
    std::filesystem::create_directories(dir);
    const std::filesystem::path ckpt = checkpoint.empty() ? dir / "checkpoint.bin" : checkpoint;
    Model model = load_checkpoint(ckpt);

    ExperimentData data = load_experiment_data(m);
    if (!(data.query.has_cameras() && data.gallery.has_cameras()))
        std::cerr << "eval: no camera labels on both sides, same-camera filtering disabled\n";

    const std::string hash = manifest_hash(m);
    const std::size_t batch = m.get_size("eval.batch_size", 64);
    EvalRunOutput out;
    for (const EvalRequest& req : eval_requests_from(m)) {
        LabeledEmbeddingSet query = embed_dataset(model, data.query, req.feature, batch);
        LabeledEmbeddingSet gallery = embed_dataset(model, data.gallery, req.feature, batch);
        EvalReport report = req.rerank
                                ? evaluate_reranked(query, gallery, req.metric, req.rerank_params)
                                : evaluate(query, gallery, req.metric);
        report.feature = to_string(req.feature);

        std::string name = "eval_" + to_string(req.feature) + "_" + to_string(req.metric);
        if (req.rerank) name += "_rerank";
        const std::filesystem::path path = dir / (name + ".tsv");
        write_eval_report(path, report, hash);

        const std::string export_mode = m.get("eval.export_embeddings", "none");
        if (export_mode == "binary") {
            write_embeddings_binary(dir / ("embeddings_query_" + to_string(req.feature) + ".bin"),
                                    query, hash);
            write_embeddings_binary(dir / ("embeddings_gallery_" + to_string(req.feature) + ".bin"),
                                    gallery, hash);
        } else if (export_mode == "text") {
            write_embeddings_text(dir / ("embeddings_query_" + to_string(req.feature) + ".tsv"),
                                  query, hash);
            write_embeddings_text(dir / ("embeddings_gallery_" + to_string(req.feature) + ".tsv"),
                                  gallery, hash);
        } else if (export_mode != "none") {
            throw ConfigError("manifest: eval.export_embeddings must be none, binary or text");
        }

        out.report_paths.push_back(path);
        out.requests.push_back(req);
        out.reports.push_back(std::move(report));
    }
    return out;
}

std::vector<SweepRow> run_sweep_beta(const Manifest& base, const std::vector<double>& betas) {
    validate_manifest_keys(base);
    for (double beta : betas)
        if (beta < 0.0) throw ConfigError("sweep-beta: beta values must be non-negative");
    if (betas.empty()) throw ConfigError("sweep-beta: no beta values");

    const std::filesystem::path dir = run_dir_for(base);
    std::filesystem::create_directories(dir);

    struct PerBeta {
        double beta;
        EvalReport ft, fi;
    };
    std::vector<PerBeta> runs;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        Manifest m = base;
        m.set("trick.center", "true");
        m.set("loss.beta", fmt_double(betas[i]));
        m.set("run.id", base.get("run.id", "run") + "/beta" + std::to_string(i));
        m.set("eval.features", "ft,fi");
        m.set("eval.metrics", base.get("eval.metrics", "cosine"));
        run_train(m);
        EvalRunOutput eval_out = run_eval(m);
        PerBeta row{betas[i], {}, {}};
        for (std::size_t r = 0; r < eval_out.requests.size(); ++r)
            (eval_out.requests[r].feature == FeatureKind::FT ? row.ft : row.fi) =
                eval_out.reports[r];
        runs.push_back(std::move(row));
    }

    std::vector<SweepRow> rows;
    for (FeatureKind kind : {FeatureKind::FT, FeatureKind::FI})
        for (const auto& run : runs) {
            const EvalReport& rep = kind == FeatureKind::FT ? run.ft : run.fi;
            SweepRow row;
            row.feature = kind;
            row.beta = run.beta;
            row.rank1 = rep.cmc.empty() ? 0.0 : rep.cmc[0];
            row.map = rep.map;
            row.r_ratio = rep.cluster ? rep.cluster->ratio : 0.0;
            rows.push_back(row);
        }

    std::ofstream os(dir / "sweep_beta.tsv");
    if (!os) throw DataError("sweep-beta: cannot write table");
    os << "# manifest " << manifest_hash(base) << '\n';
    os << "feature\tbeta\trank1\tmAP\tR\n";
    for (const auto& row : rows)
        os << to_string(row.feature) << '\t' << fmt_double(row.beta) << '\t'
           << fmt_double(row.rank1) << '\t' << fmt_double(row.map) << '\t'
           << fmt_double(row.r_ratio) << '\n';
    return rows;
}

std::vector<AblationRow> run_ablation(const Manifest& base) {
    validate_manifest_keys(base);
    const std::filesystem::path dir = run_dir_for(base);
    std::filesystem::create_directories(dir);

    std::vector<AblationRow> rows;
    for (const std::string& preset : ablation_ladder()) {
        Manifest m = base;
        apply_preset(m, preset);
        std::string safe = preset;
        std::replace(safe.begin(), safe.end(), '+', 'p');
        m.set("run.id", base.get("run.id", "run") + "/" + safe);
        const bool bn = neck_has_bn(parse_neck_variant(m.get("neck", "neck3")));
        m.set("eval.features", bn ? "fi" : "ft");
        m.set("eval.metrics", bn ? "cosine" : "euclidean");
        run_train(m);
        EvalRunOutput eval_out = run_eval(m);
        AblationRow row;
        row.preset = preset;
        row.rank1 = eval_out.reports[0].cmc.empty() ? 0.0 : eval_out.reports[0].cmc[0];
        row.map = eval_out.reports[0].map;
        rows.push_back(std::move(row));
    }

    std::ofstream os(dir / "ablation.tsv");
    if (!os) throw DataError("ablate: cannot write table");
    os << "# manifest " << manifest_hash(base) << '\n';
    os << "preset\trank1\tmAP\n";
    for (const auto& row : rows)
        os << row.preset << '\t' << fmt_double(row.rank1) << '\t' << fmt_double(row.map) << '\n';
    return rows;
}

std::filesystem::path run_export_scatter(const Manifest& m, FeatureKind kind,
                                         const std::filesystem::path& checkpoint) {
    validate_manifest_keys(m);
    const std::filesystem::path dir = run_dir_for(m);
    std::filesystem::create_directories(dir);
    const std::filesystem::path ckpt = checkpoint.empty() ? dir / "checkpoint.bin" : checkpoint;
    Model model = load_checkpoint(ckpt);

    ExperimentData data = load_experiment_data(m);
    const std::size_t batch = m.get_size("eval.batch_size", 64);
    LabeledEmbeddingSet query = embed_dataset(model, data.query, kind, batch);
    LabeledEmbeddingSet gallery = embed_dataset(model, data.gallery, kind, batch);

    Mat pooled(query.size() + gallery.size(), query.dim());
    std::copy(query.embeddings.data.begin(), query.embeddings.data.end(), pooled.data.begin());
    std::copy(gallery.embeddings.data.begin(), gallery.embeddings.data.end(),
              pooled.data.begin() + query.embeddings.data.size());
    std::vector<int> labels = query.identities;
    labels.insert(labels.end(), gallery.identities.begin(), gallery.identities.end());

    const std::filesystem::path path = dir / ("scatter_" + to_string(kind) + ".tsv");
    export_embedding_scatter(pooled, labels, path, manifest_hash(m));
    return path;
}

}  // namespace reidkit
