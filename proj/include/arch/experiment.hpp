#pragma once

#include <filesystem>
#include <string>

#include "arch/trainer.hpp"

namespace arch {

// Full experiment description: training setup plus data source and outputs.
// Serializes to a flat key=value text format; unknown keys are rejected.
struct ExperimentConfig {
    TrainingConfig train;
    SyntheticSpec synthetic;
    std::string tsv_train;  // empty => synthetic data
    std::string tsv_test;
    std::string out_dir = "out";
    std::size_t repeats = 1;

    void set(const std::string& key, const std::string& value);
    std::string serialize() const;

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig load_file(const std::string& path);

    bool operator==(const ExperimentConfig& other) const;

    // Resolved output directory; the ARCH_REG_OUT env var wins when set.
    std::filesystem::path resolved_out_dir() const;

    Dataset make_dataset() const;
};

struct RunSummary {
    double train_metric = 0.0;
    double test_metric = 0.0;
    std::size_t total_forward = 0;
    std::size_t total_backward = 0;
    double forward_avg = 0.0;
    double backward_avg = 0.0;
    double grad_norm_variance_half = 0.0;  // over the last 50% of iterations
    std::size_t cache_entries = 0;
    std::size_t cache_scalars = 0;
    std::size_t iterations = 0;
    double wall_time_sec = 0.0;
};

// Runs one experiment and writes run.csv, summary.json, and config.json
// under the resolved output directory.
RunSummary run_experiment(const ExperimentConfig& config);

// Parameter study over one axis in {alpha, t_cache, neighbors,
// cache_fraction}; t_cache accepts the literal "inf". Writes sweep.csv with
// one row per (value, seed), `repeats` seeds per value.
void run_sweep(const ExperimentConfig& base, const std::string& axis,
               const std::vector<std::string>& values);

// Brute-force oracle suite: KNN exhaustive equivalence, finite-difference
// gradient checks, and the pass-count formulas. Returns true iff all pass.
bool run_oracles(bool verbose = true);

}  // namespace arch
