#pragma once

#include <unordered_map>

#include "arch/model.hpp"

namespace arch {

enum class RegularizerKind { KL, SquaredError };

inline RegularizerKind regularizer_for(TaskKind task) {
    return task == TaskKind::Classification ? RegularizerKind::KL
                                            : RegularizerKind::SquaredError;
}

// KL(p || q) = sum_k p_k log(p_k / q_k), entries clipped to [1e-12, 1].
double adv_kl(const Tensor& p_clean, const Tensor& q_pert);

// (f_clean - f_pert)^2 for scalar outputs.
double adv_sq(double f_clean, double f_pert);

// Smoothness penalty between the clean and perturbed prediction.
double ell_v(const std::vector<std::size_t>& tokens, const Tensor& delta,
             const ParamVector& params, RegularizerKind kind);

struct EllVGrad {
    double value;
    Tensor grad;  // d ell_v / d delta, clean branch held constant
};

// Gradient of ell_v w.r.t. delta with the clean output passed in as a
// constant (delta does not appear in the clean branch). Operates on the
// precomputed sample embedding.
EllVGrad ell_v_grad_delta(const Tensor& x_embed, const Tensor& delta,
                          const ParamVector& params, RegularizerKind kind,
                          const Tensor& clean_output);

// empirical_risk + (lambda / |batch|) * sum_i ell_v(x_i, delta_i, theta).
double total_objective(const ParamVector& params, const std::vector<Sample>& batch,
                       const std::unordered_map<std::size_t, Tensor>& delta_map,
                       double lambda, RegularizerKind kind);

// On-tape regularizer term between a clean and a perturbed prediction node.
// When clean_branch_grad is false the clean prediction enters as a constant
// copy, so parameter gradients flow only through the perturbed branch.
NodeId build_ell_v(Tape& tape, NodeId clean_pred, NodeId pert_pred,
                   RegularizerKind kind, bool clean_branch_grad = true);

}  // namespace arch
