#include "arch/regularizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace arch {

double adv_kl(const Tensor& p_clean, const Tensor& q_pert) {
    if (!p_clean.same_shape(q_pert))
        throw std::invalid_argument("adv_kl: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p_clean.numel(); ++i) {
        const double p = std::clamp(p_clean.data[i], Tape::kProbFloor, 1.0);
        const double q = std::clamp(q_pert.data[i], Tape::kProbFloor, 1.0);
        s += p * std::log(p / q);
    }
    return s;
}

double adv_sq(double f_clean, double f_pert) {
    const double r = f_clean - f_pert;
    return r * r;
}

double ell_v(const std::vector<std::size_t>& tokens, const Tensor& delta,
             const ParamVector& params, RegularizerKind kind) {
    const Tensor clean = predict(tokens, nullptr, params);
    const Tensor pert = predict(tokens, &delta, params);
    return kind == RegularizerKind::KL ? adv_kl(clean, pert)
                                       : adv_sq(clean.scalar(), pert.scalar());
}

EllVGrad ell_v_grad_delta(const Tensor& x_embed, const Tensor& delta,
                          const ParamVector& params, RegularizerKind kind,
                          const Tensor& clean_output) {
    Tape tape;
    ModelGraph g = add_ffn_leaves(tape, params, false);
    NodeId x = tape.leaf(x_embed);
    NodeId d = tape.leaf(delta, true);
    NodeId pert = build_predict_from_embedding(tape, g, params.cfg, x, d);
    NodeId clean = tape.leaf(clean_output);
    NodeId loss = kind == RegularizerKind::KL
                      ? tape.kl_div(clean, pert)
                      : tape.sum(tape.square(tape.sub(clean, pert)));
    EllVGrad out;
    out.value = tape.forward(loss).scalar();
    tape.backward(loss);
    out.grad = tape.grad(d);
    return out;
}

double total_objective(const ParamVector& params, const std::vector<Sample>& batch,
                       const std::unordered_map<std::size_t, Tensor>& delta_map,
                       double lambda, RegularizerKind kind) {
    if (batch.empty())
        throw std::invalid_argument("total_objective: empty batch");
    double risk = 0.0;
    double reg = 0.0;
    for (const auto& s : batch) {
        risk += task_loss(predict(s.tokens, nullptr, params), s, params.cfg);
        auto it = delta_map.find(s.id);
        if (it == delta_map.end())
            throw std::invalid_argument("total_objective: missing delta for sample " +
                                        std::to_string(s.id));
        reg += ell_v(s.tokens, it->second, params, kind);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    return risk * inv + lambda * reg * inv;
}

NodeId build_ell_v(Tape& tape, NodeId clean_pred, NodeId pert_pred,
                   RegularizerKind kind, bool clean_branch_grad) {
    NodeId clean = clean_branch_grad ? clean_pred : tape.stop_grad(clean_pred);
    return kind == RegularizerKind::KL
               ? tape.kl_div(clean, pert_pred)
               : tape.sum(tape.square(tape.sub(clean, pert_pred)));
}

}  // namespace arch
