#pragma once

#include <utility>

#include "arch/cache.hpp"
#include "arch/knn.hpp"

namespace arch {

enum class Strategy { Standard, Smart, R3F, Arch };

struct TrainingConfig {
    Strategy strategy = Strategy::Arch;
    double lambda = 1.0;
    double epsilon = 0.1;
    double eta = 0.1;           // PGD ascent step size
    std::size_t pgd_steps = 3;  // S
    std::size_t epochs = 10;    // T
    std::size_t t_cache = 15;   // T_c; kCacheOnce means cache once
    double alpha = 0.01;        // EMA coefficient
    double cache_fraction = 1.0;  // p
    std::size_t neighbors = 1;    // K
    bool random_neighbors = false;  // R-1-NN ablation
    std::size_t batch_size = 32;
    double learning_rate = 0.3;
    std::uint64_t seed = 0;
    NormKind norm_kind = NormKind::L2Sentence;
    InitKind init = InitKind::Uniform;
    // When false, parameter gradients of the regularizer flow only through
    // the perturbed branch.
    bool clean_branch_grad = true;
    ModelConfig model;

    void validate() const;
};

struct TrainResult {
    ParamVector params;
    PassCounter passes;
    std::vector<double> grad_norms;  // per-iteration ||grad theta|| of the objective
    std::vector<double> loss_trace;  // per-iteration mean task loss
    std::vector<double> reg_trace;   // per-iteration regularizer term
    PerturbationCache::Footprint cache_footprint;
    std::size_t iterations = 0;
};

// theta' = theta - lr * grad. Aborts on non-finite gradients.
void sgd_step(std::vector<double>& theta, const std::vector<double>& grad, double lr);

TrainResult train(const Dataset& dataset, const TrainingConfig& config);

// Closed-form per-iteration (forward, backward) averages per strategy.
std::pair<double, double> count_passes_expected(Strategy strategy, std::size_t s,
                                                std::size_t t_cache);

// Sample variance of the last `window` entries of the trace.
double grad_norm_variance(const std::vector<double>& trace, std::size_t window);

// Classification accuracy in [0, 1] or mean squared error.
double evaluate(const ParamVector& params, const std::vector<Sample>& samples);

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

}  // namespace arch
