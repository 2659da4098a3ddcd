#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "arch/experiment.hpp"

namespace py = pybind11;
using namespace arch;

namespace {

Tensor tensor_from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("empty matrix");
    Tensor t({rows.size(), rows[0].size()});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size())
            throw std::invalid_argument("ragged matrix");
        for (std::size_t c = 0; c < rows[0].size(); ++c) t.at(r, c) = rows[r][c];
    }
    return t;
}

std::vector<std::vector<double>> tensor_to_rows(const Tensor& t) {
    std::vector<std::vector<double>> rows(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) rows[r][c] = t.at(r, c);
    return rows;
}

ExperimentConfig config_from_dict(const py::dict& d) {
    ExperimentConfig cfg;
    for (auto item : d)
        cfg.set(py::cast<std::string>(item.first), py::cast<std::string>(py::str(item.second)));
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Adversarial regularization training engine with perturbation caching";

    m.def("kl_divergence", [](const std::vector<double>& p, const std::vector<double>& q) {
        return adv_kl(Tensor(p, {p.size()}), Tensor(q, {q.size()}));
    });

    m.def("project_l2", [](const std::vector<std::vector<double>>& delta, double eps) {
        Perturbation p{tensor_from_rows(delta), NormKind::L2Sentence};
        return tensor_to_rows(project(std::move(p), eps).values);
    });

    m.def("project_linf", [](const std::vector<std::vector<double>>& delta, double eps) {
        Perturbation p{tensor_from_rows(delta), NormKind::LinfWord};
        return tensor_to_rows(project(std::move(p), eps).values);
    });

    m.def("ema_update", [](const std::vector<std::vector<double>>& old_delta,
                           const std::vector<std::vector<double>>& fresh, double alpha) {
        Perturbation a{tensor_from_rows(old_delta), NormKind::L2Sentence};
        Perturbation b{tensor_from_rows(fresh), NormKind::L2Sentence};
        return tensor_to_rows(ema_update(a, b, alpha).values);
    });

    m.def("count_passes_expected",
          [](const std::string& strategy, std::size_t s, std::size_t t_cache) {
              return count_passes_expected(strategy_from_name(strategy), s, t_cache);
          });

    m.def("build_neighbor_index",
          [](const std::vector<std::vector<double>>& vectors,
             const std::vector<std::size_t>& cache_set, std::size_t k) {
              std::vector<Tensor> vs;
              for (const auto& v : vectors) vs.push_back(Tensor(v, {v.size()}));
              const auto index = build_neighbor_index(
                  vs, std::set<std::size_t>(cache_set.begin(), cache_set.end()), k);
              return index.neighbors;
          });

    m.def("run_experiment", [](const py::dict& d) {
        const RunSummary s = run_experiment(config_from_dict(d));
        py::dict out;
        out["train_metric"] = s.train_metric;
        out["test_metric"] = s.test_metric;
        out["total_forward"] = s.total_forward;
        out["total_backward"] = s.total_backward;
        out["forward_avg"] = s.forward_avg;
        out["backward_avg"] = s.backward_avg;
        out["grad_norm_variance_half"] = s.grad_norm_variance_half;
        out["cache_entries"] = s.cache_entries;
        out["cache_scalars"] = s.cache_scalars;
        out["iterations"] = s.iterations;
        return out;
    });

    m.def("run_oracles", []() { return run_oracles(false); });
}
