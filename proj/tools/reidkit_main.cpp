#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reidkit/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

reidkit::Manifest build_manifest(const std::string& path, const std::string& preset,
                                 const std::vector<std::string>& overrides) {
    reidkit::Manifest m = reidkit::Manifest::load(path);
    if (!preset.empty()) reidkit::apply_preset(m, preset);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw reidkit::ConfigError("--set expects key=value, got " + kv);
        m.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    reidkit::validate_manifest_keys(m);
    return m;
}

std::vector<double> parse_betas(const std::string& list) {
    std::vector<double> betas;
    std::size_t begin = 0;
    while (begin <= list.size()) {
        const auto comma = list.find(',', begin);
        const std::string part = list.substr(begin, comma == std::string::npos ? std::string::npos
                                                                                : comma - begin);
        if (!part.empty()) {
            try {
                betas.push_back(std::stod(part));
            } catch (const std::exception&) {
                throw reidkit::ConfigError("--betas entry is not a number: " + part);
            }
        }
        if (comma == std::string::npos) break;
        begin = comma + 1;
    }
    return betas;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"metric-learning training, retrieval evaluation and experiment grids"};
    app.require_subcommand(1);

    std::string manifest_path, preset, checkpoint, betas_arg, feature_arg = "fi";
    std::vector<std::string> overrides;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--manifest", manifest_path, "manifest file (key = value lines)")
            ->required();
        cmd->add_option("--set", overrides, "override a manifest key (key=value), repeatable");
    };

    CLI::App* cmd_train = app.add_subcommand("train", "train a model from a manifest");
    add_common(cmd_train);
    cmd_train->add_option("--preset", preset,
                          "trick ladder preset: baseline-s, +warmup, +rea, +ls, +stride1, "
                          "+bnneck, +center, full");

    CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(cmd_eval);
    cmd_eval->add_option("--checkpoint", checkpoint, "checkpoint path (default: run directory)");

    CLI::App* cmd_sweep = app.add_subcommand("sweep-beta", "center-loss weight sweep");
    add_common(cmd_sweep);
    cmd_sweep->add_option("--betas", betas_arg, "comma-separated beta values");

    CLI::App* cmd_ablate = app.add_subcommand("ablate", "run the cumulative trick ladder");
    add_common(cmd_ablate);

    CLI::App* cmd_scatter =
        app.add_subcommand("export-scatter", "export 2-D embeddings for plotting");
    add_common(cmd_scatter);
    cmd_scatter->add_option("--checkpoint", checkpoint, "checkpoint path (default: run directory)");
    cmd_scatter->add_option("--feature", feature_arg, "ft or fi (default fi)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
    }

    try {
        const reidkit::Manifest manifest = build_manifest(manifest_path, preset, overrides);
        if (cmd_train->parsed()) {
            const auto out = reidkit::run_train(manifest);
            if (out.log.diverged) {
                std::cerr << "training diverged at iteration " << out.log.diverged_iteration
                          << "\n";
                return kExitDiverged;
            }
            std::cout << "checkpoint: " << out.checkpoint.string() << "\n"
                      << "training log: " << out.log_path.string() << "\n";
        } else if (cmd_eval->parsed()) {
            const auto out = reidkit::run_eval(manifest, checkpoint);
            for (std::size_t i = 0; i < out.report_paths.size(); ++i) {
                const auto& rep = out.reports[i];
                std::cout << out.report_paths[i].string() << "\trank1="
                          << (rep.cmc.empty() ? 0.0 : rep.cmc[0]) << "\tmAP=" << rep.map << "\n";
            }
        } else if (cmd_sweep->parsed()) {
            std::vector<double> betas = betas_arg.empty()
                                            ? std::vector<double>{0.0, 0.0005, 0.005, 0.05, 0.5}
                                            : parse_betas(betas_arg);
            const auto rows = reidkit::run_sweep_beta(manifest, betas);
            std::cout << "feature\tbeta\trank1\tmAP\tR\n";
            for (const auto& row : rows)
                std::cout << to_string(row.feature) << '\t' << row.beta << '\t' << row.rank1
                          << '\t' << row.map << '\t' << row.r_ratio << "\n";
        } else if (cmd_ablate->parsed()) {
            const auto rows = reidkit::run_ablation(manifest);
            std::cout << "preset\trank1\tmAP\n";
            for (const auto& row : rows)
                std::cout << row.preset << '\t' << row.rank1 << '\t' << row.map << "\n";
        } else if (cmd_scatter->parsed()) {
            const auto path = reidkit::run_export_scatter(
                manifest, reidkit::parse_feature_kind(feature_arg), checkpoint);
            std::cout << "scatter: " << path.string() << "\n";
        }
    } catch (const reidkit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const reidkit::ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const reidkit::DivergenceError& e) {
        std::cerr << e.what() << "\n";
        return kExitDiverged;
    } catch (const reidkit::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}
