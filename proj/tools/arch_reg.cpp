#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "arch/experiment.hpp"

namespace {

// Remaining tokens are flat config overrides: --key value pairs.
void apply_overrides(arch::ExperimentConfig& cfg,
                     const std::vector<std::string>& extras) {
    for (std::size_t i = 0; i < extras.size(); i += 2) {
        const std::string& flag = extras[i];
        if (flag.rfind("--", 0) != 0)
            throw CLI::ValidationError("expected --key value, got '" + flag + "'");
        if (i + 1 >= extras.size())
            throw CLI::ValidationError("missing value for " + flag);
        cfg.set(flag.substr(2), extras[i + 1]);
    }
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        out.push_back(s.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial regularization training engine with perturbation caching"};
    app.require_subcommand(1);

    std::string config_path;
    std::string axis;
    std::string values_csv;

    auto* run_cmd = app.add_subcommand("run", "Run a single experiment");
    run_cmd->add_option("--config", config_path, "key=value config file");
    run_cmd->allow_extras();

    auto* sweep_cmd = app.add_subcommand("sweep", "Parameter study over one axis");
    sweep_cmd->add_option("--config", config_path, "key=value config file");
    sweep_cmd->add_option("--axis", axis,
                          "alpha | t_cache | neighbors | cache_fraction")
        ->required();
    sweep_cmd->add_option("--values", values_csv, "comma-separated axis values")
        ->required();
    sweep_cmd->allow_extras();

    auto* oracle_cmd =
        app.add_subcommand("oracle", "Run the brute-force oracle checks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (oracle_cmd->parsed()) {
            return arch::run_oracles() ? 0 : 1;
        }

        arch::ExperimentConfig cfg;
        if (!config_path.empty())
            cfg = arch::ExperimentConfig::load_file(config_path);

        if (run_cmd->parsed()) {
            apply_overrides(cfg, run_cmd->remaining());
            const arch::RunSummary s = arch::run_experiment(cfg);
            std::printf("strategy=%s train=%.4f test=%.4f fwd/iter=%.4f bwd/iter=%.4f\n",
                        arch::strategy_name(cfg.train.strategy), s.train_metric,
                        s.test_metric, s.forward_avg, s.backward_avg);
            std::printf("outputs written to %s\n",
                        cfg.resolved_out_dir().string().c_str());
            return 0;
        }

        apply_overrides(cfg, sweep_cmd->remaining());
        arch::run_sweep(cfg, axis, split_csv(values_csv));
        std::printf("sweep.csv written to %s\n",
                    cfg.resolved_out_dir().string().c_str());
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
