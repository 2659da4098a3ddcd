#include "arch/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace arch {

void TrainingConfig::validate() const {
    if (lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (t_cache == 0) throw std::invalid_argument("config: T_c must be >= 1");
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("config: alpha must be in [0, 1]");
    if (cache_fraction <= 0.0 || cache_fraction > 1.0)
        throw std::invalid_argument("config: p must be in (0, 1]");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (epsilon <= 0.0) throw std::invalid_argument("config: epsilon must be > 0");
    const bool needs_pgd =
        (strategy == Strategy::Smart || strategy == Strategy::Arch) && lambda > 0.0;
    if (needs_pgd && pgd_steps < 1)
        throw std::invalid_argument("config: S must be >= 1");
    if (neighbors < 1) throw std::invalid_argument("config: K must be >= 1");
}

void sgd_step(std::vector<double>& theta, const std::vector<double>& grad, double lr) {
    if (theta.size() != grad.size())
        throw std::invalid_argument("sgd_step: size mismatch");
    for (double g : grad)
        if (!std::isfinite(g))
            throw std::runtime_error("sgd_step: non-finite gradient, aborting run");
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grad[i];
}

std::pair<double, double> count_passes_expected(Strategy strategy, std::size_t s,
                                                std::size_t t_cache) {
    switch (strategy) {
        case Strategy::Standard:
            return {1.0, 1.0};
        case Strategy::Smart:
            return {1.0 + static_cast<double>(s), 1.0 + static_cast<double>(s)};
        case Strategy::R3F:
            return {2.0, 1.0};
        case Strategy::Arch: {
            if (t_cache == kCacheOnce) return {2.0, 1.0};
            const double tc = static_cast<double>(t_cache);
            const double sd = static_cast<double>(s);
            return {2.0 + (sd - 1.0) / tc, 1.0 + sd / tc};
        }
    }
    throw std::invalid_argument("count_passes_expected: unknown strategy");
}

double grad_norm_variance(const std::vector<double>& trace, std::size_t window) {
    if (window < 2)
        throw std::invalid_argument("grad_norm_variance: window must be >= 2");
    if (window > trace.size())
        throw std::invalid_argument("grad_norm_variance: window exceeds trace");
    const auto begin = trace.end() - static_cast<std::ptrdiff_t>(window);
    double mean = 0.0;
    for (auto it = begin; it != trace.end(); ++it) mean += *it;
    mean /= static_cast<double>(window);
    double var = 0.0;
    for (auto it = begin; it != trace.end(); ++it) {
        const double d = *it - mean;
        var += d * d;
    }
    return var / static_cast<double>(window - 1);
}

double evaluate(const ParamVector& params, const std::vector<Sample>& samples) {
    if (samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
    if (params.cfg.task == TaskKind::Classification) {
        std::size_t correct = 0;
        for (const auto& s : samples) {
            const Tensor out = predict(s.tokens, nullptr, params);
            const std::size_t argmax = static_cast<std::size_t>(
                std::max_element(out.data.begin(), out.data.end()) - out.data.begin());
            if (argmax == s.label) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(samples.size());
    }
    double mse = 0.0;
    for (const auto& s : samples) {
        const double r = predict(s.tokens, nullptr, params).scalar() - s.target;
        mse += r * r;
    }
    return mse / static_cast<double>(samples.size());
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Standard: return "standard";
        case Strategy::Smart: return "smart";
        case Strategy::R3F: return "r3f";
        case Strategy::Arch: return "arch";
    }
    return "unknown";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "standard") return Strategy::Standard;
    if (name == "smart") return Strategy::Smart;
    if (name == "r3f") return Strategy::R3F;
    if (name == "arch") return Strategy::Arch;
    throw std::invalid_argument("unknown strategy: " + name);
}

TrainResult train(const Dataset& dataset, const TrainingConfig& config) {
    config.validate();
    if (dataset.train.empty()) throw std::invalid_argument("train: empty dataset");

    ModelConfig mcfg = config.model;
    mcfg.vocab_size = dataset.vocab_size;
    if (mcfg.task == TaskKind::Classification) mcfg.classes = dataset.num_classes;

    std::mt19937_64 param_rng(config.seed);
    std::mt19937_64 shuffle_rng(config.seed + 1);
    std::mt19937_64 perturb_rng(config.seed + 2);
    std::mt19937_64 setup_rng(config.seed + 3);

    TrainResult result;
    result.params = ParamVector::init(mcfg, param_rng);
    ParamVector& params = result.params;

    const RegularizerKind rkind = regularizer_for(mcfg.task);
    const bool use_reg = config.strategy != Strategy::Standard && config.lambda > 0.0;
    const std::size_t n = dataset.train.size();

    // Caching state (arch only).
    PerturbationCache cache(config.t_cache, config.alpha);
    std::set<std::size_t> cache_set;
    NeighborIndex index;
    const bool partial_cache = config.cache_fraction < 1.0;
    if (config.strategy == Strategy::Arch && use_reg) {
        if (partial_cache) {
            cache_set = sample_cache_set(n, config.cache_fraction, setup_rng);
            // Sentence vectors from the initial embedding snapshot.
            const Tensor w0 = params.embedding_matrix();
            std::vector<Tensor> vectors;
            vectors.reserve(n);
            for (const auto& s : dataset.train)
                vectors.push_back(sentence_vector(s, w0));
            index = config.random_neighbors
                        ? random_neighbor_index(n, cache_set, config.neighbors,
                                                setup_rng)
                        : build_neighbor_index(vectors, cache_set, config.neighbors);
        } else {
            for (std::size_t i = 0; i < n; ++i) cache_set.insert(i);
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t t = 0; t < config.epochs; ++t) {
        // Fisher-Yates shuffle, identical draw sequence across strategies.
        for (std::size_t i = n; i-- > 1;) {
            std::uniform_int_distribution<std::size_t> dist(0, i);
            std::swap(order[i], order[dist(shuffle_rng)]);
        }
        const bool refresh = config.strategy == Strategy::Arch && use_reg &&
                             should_refresh(t, config.t_cache);

        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            const std::size_t bsz = stop - start;
            result.passes.begin_iteration();

            const Tensor w_embed = params.embedding_matrix();

            // Per-sample perturbations for this iteration.
            std::vector<Tensor> deltas;
            if (use_reg) {
                deltas.reserve(bsz);
                for (std::size_t b = start; b < stop; ++b) {
                    const Sample& s = dataset.train[order[b]];
                    const std::vector<std::size_t> shape{s.tokens.size(),
                                                         mcfg.embed_dim};
                    switch (config.strategy) {
                        case Strategy::Smart: {
                            const Tensor x = embed(s, w_embed);
                            deltas.push_back(
                                solve_inner_max(x, params, rkind, config.pgd_steps,
                                                config.eta, config.epsilon,
                                                config.norm_kind, config.init,
                                                perturb_rng)
                                    .values);
                            break;
                        }
                        case Strategy::R3F:
                            deltas.push_back(random_noise(shape, config.epsilon,
                                                          config.norm_kind,
                                                          perturb_rng)
                                                 .values);
                            break;
                        case Strategy::Arch: {
                            if (refresh) {
                                const Tensor x = embed(s, w_embed);
                                Perturbation fresh = solve_inner_max(
                                    x, params, rkind, config.pgd_steps, config.eta,
                                    config.epsilon, config.norm_kind, config.init,
                                    perturb_rng);
                                if (cache_set.count(s.id)) cache.put(s.id, fresh);
                                deltas.push_back(std::move(fresh.values));
                            } else if (cache_set.count(s.id)) {
                                auto hit = cache.get(s.id);
                                if (!hit)
                                    throw std::logic_error(
                                        "train: cached id missing from cache");
                                deltas.push_back(std::move(hit->values));
                            } else {
                                deltas.push_back(
                                    construct_perturbation(s.id, index, cache,
                                                           s.tokens.size())
                                        .values);
                            }
                            break;
                        }
                        case Strategy::Standard:
                            break;
                    }
                }
                // Batch-level pass accounting: PGD steps cost (S, S); a reused
                // perturbation costs one extra forward for the perturbed branch.
                if (config.strategy == Strategy::Smart ||
                    (config.strategy == Strategy::Arch && refresh)) {
                    result.passes.record(config.pgd_steps, config.pgd_steps);
                } else {
                    result.passes.record(1, 0);
                }
            }

            // Descent step on the composite objective.
            Tape tape;
            ModelGraph g = add_param_leaves(tape, params, true);
            NodeId loss_sum = 0;
            NodeId reg_sum = 0;
            bool have_loss = false, have_reg = false;
            for (std::size_t b = start; b < stop; ++b) {
                const Sample& s = dataset.train[order[b]];
                NodeId pred = build_predict(tape, g, mcfg, s.tokens);
                NodeId loss = build_task_loss(tape, pred, mcfg, s);
                loss_sum = have_loss ? tape.add(loss_sum, loss) : loss;
                have_loss = true;
                if (use_reg) {
                    NodeId d = tape.leaf(deltas[b - start]);
                    NodeId pert = build_predict(tape, g, mcfg, s.tokens, d);
                    NodeId reg = build_ell_v(tape, pred, pert, rkind,
                                             config.clean_branch_grad);
                    reg_sum = have_reg ? tape.add(reg_sum, reg) : reg;
                    have_reg = true;
                }
            }
            const double inv = 1.0 / static_cast<double>(bsz);
            NodeId mean_loss = tape.scale(loss_sum, inv);
            NodeId objective = mean_loss;
            NodeId mean_reg = 0;
            if (have_reg) {
                mean_reg = tape.scale(reg_sum, config.lambda * inv);
                objective = tape.add(mean_loss, mean_reg);
            }
            result.passes.record(1, 1);

            tape.forward(objective);
            tape.backward(objective);

            // Flatten parameter gradients in theta layout order.
            std::vector<double> grad;
            grad.reserve(params.size());
            for (NodeId id : {g.w, g.w1, g.b1, g.w2, g.b2}) {
                const auto& a = tape.grad(id).data;
                grad.insert(grad.end(), a.begin(), a.end());
            }

            result.grad_norms.push_back(l2_norm(grad));
            result.loss_trace.push_back(tape.value(mean_loss).scalar());
            result.reg_trace.push_back(have_reg ? tape.value(mean_reg).scalar() : 0.0);

            sgd_step(params.theta, grad, config.learning_rate);
            ++result.iterations;
        }
    }

    result.cache_footprint = cache.memory_footprint();
    return result;
}

}  // namespace arch
