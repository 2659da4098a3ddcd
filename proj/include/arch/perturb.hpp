#pragma once

#include <random>

#include "arch/passes.hpp"
#include "arch/regularizer.hpp"

namespace arch {

enum class NormKind { L2Sentence, LinfWord };
enum class InitKind { Uniform, Normal };

// Additive embedding-space noise for one sample, constrained to the
// epsilon ball of its norm kind.
struct Perturbation {
    Tensor values;  // (sentence length x embed dim)
    NormKind norm_kind = NormKind::L2Sentence;
};

double frobenius_norm(const Tensor& t);
double max_abs(const Tensor& t);

// Uniform(-eps/10, eps/10) or Normal(0, 1e-5) entries; the all-zero draw is
// resampled so the ascent never starts at the stationary origin.
Perturbation init_perturbation(const std::vector<std::size_t>& shape, InitKind mode,
                               double epsilon, NormKind norm_kind,
                               std::mt19937_64& rng);

// L2: radial scaling onto the Frobenius ball; Linf: per-entry clamp.
Perturbation project(Perturbation delta, double epsilon);

// One ascent step delta <- project(delta + eta * g / ||g||_2) on ell_v,
// where x is the sample's embedding. A vanishing gradient (norm < 1e-12)
// skips the normalization.
Perturbation pgd_step(const Tensor& x_embed, Perturbation delta,
                      const ParamVector& params, RegularizerKind kind, double eta,
                      double epsilon, const Tensor* clean_output = nullptr);

// S projected-gradient-ascent steps from a fresh init. Records S forward and
// S backward passes when a counter is supplied.
Perturbation solve_inner_max(const Tensor& x_embed, const ParamVector& params,
                             RegularizerKind kind, std::size_t steps, double eta,
                             double epsilon, NormKind norm_kind, InitKind init,
                             std::mt19937_64& rng, PassCounter* passes = nullptr);

// Normal(0, eps/10) draw followed by projection; consumes no backward passes.
Perturbation random_noise(const std::vector<std::size_t>& shape, double epsilon,
                          NormKind norm_kind, std::mt19937_64& rng);

}  // namespace arch
