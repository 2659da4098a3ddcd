#include "arch/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace arch {

double frobenius_norm(const Tensor& t) { return l2_norm(t.data); }

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.data) m = std::max(m, std::abs(v));
    return m;
}

Perturbation init_perturbation(const std::vector<std::size_t>& shape, InitKind mode,
                               double epsilon, NormKind norm_kind,
                               std::mt19937_64& rng) {
    Perturbation p;
    p.norm_kind = norm_kind;
    p.values = Tensor(shape);
    do {
        if (mode == InitKind::Uniform) {
            std::uniform_real_distribution<double> dist(-epsilon / 10.0, epsilon / 10.0);
            for (auto& v : p.values.data) v = dist(rng);
        } else {
            std::normal_distribution<double> dist(0.0, 1e-5);
            for (auto& v : p.values.data) v = dist(rng);
        }
    } while (max_abs(p.values) == 0.0);
    return p;
}

Perturbation project(Perturbation delta, double epsilon) {
    if (epsilon <= 0.0) throw std::invalid_argument("project: epsilon must be positive");
    if (delta.norm_kind == NormKind::L2Sentence) {
        const double norm = frobenius_norm(delta.values);
        if (norm > epsilon) {
            const double s = epsilon / norm;
            for (auto& v : delta.values.data) v *= s;
        }
    } else {
        for (auto& v : delta.values.data) v = std::clamp(v, -epsilon, epsilon);
    }
    return delta;
}

Perturbation pgd_step(const Tensor& x_embed, Perturbation delta,
                      const ParamVector& params, RegularizerKind kind, double eta,
                      double epsilon, const Tensor* clean_output) {
    Tensor clean;
    if (!clean_output) {
        clean = predict_from_embedding(x_embed, nullptr, params);
        clean_output = &clean;
    }
    const EllVGrad g = ell_v_grad_delta(x_embed, delta.values, params, kind,
                                        *clean_output);
    const double gnorm = l2_norm(g.grad.data);
    const double scale = gnorm < 1e-12 ? eta : eta / gnorm;
    for (std::size_t i = 0; i < delta.values.numel(); ++i)
        delta.values.data[i] += scale * g.grad.data[i];
    return project(std::move(delta), epsilon);
}

Perturbation solve_inner_max(const Tensor& x_embed, const ParamVector& params,
                             RegularizerKind kind, std::size_t steps, double eta,
                             double epsilon, NormKind norm_kind, InitKind init,
                             std::mt19937_64& rng, PassCounter* passes) {
    if (steps < 1)
        throw std::invalid_argument("solve_inner_max: need at least one step");
    Perturbation delta = init_perturbation(x_embed.shape, init, epsilon,
                                           norm_kind, rng);
    const Tensor clean = predict_from_embedding(x_embed, nullptr, params);
    for (std::size_t s = 0; s < steps; ++s)
        delta = pgd_step(x_embed, std::move(delta), params, kind, eta, epsilon, &clean);
    if (passes) passes->record(steps, steps);
    return delta;
}

Perturbation random_noise(const std::vector<std::size_t>& shape, double epsilon,
                          NormKind norm_kind, std::mt19937_64& rng) {
    Perturbation p;
    p.norm_kind = norm_kind;
    p.values = Tensor(shape);
    std::normal_distribution<double> dist(0.0, epsilon / 10.0);
    for (auto& v : p.values.data) v = dist(rng);
    return project(std::move(p), epsilon);
}

}  // namespace arch
