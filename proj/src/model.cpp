#include "arch/model.hpp"

#include <cmath>
#include <stdexcept>

namespace arch {

ParamVector ParamVector::init(const ModelConfig& cfg, std::mt19937_64& rng) {
    ParamVector p;
    p.cfg = cfg;
    p.theta.resize(cfg.embed_dim * cfg.vocab_size + cfg.hidden * cfg.embed_dim +
                   cfg.hidden + cfg.out_dim() * cfg.hidden + cfg.out_dim());

    std::uniform_real_distribution<double> emb_dist(-0.1, 0.1);
    for (std::size_t i = 0; i < p.w1_offset(); ++i) p.theta[i] = emb_dist(rng);

    // Resample any all-zero embedding column; sentence vectors must be nonzero.
    for (std::size_t col = 0; col < cfg.vocab_size; ++col) {
        bool zero = true;
        for (std::size_t k = 0; k < cfg.embed_dim; ++k)
            if (p.theta[k * cfg.vocab_size + col] != 0.0) { zero = false; break; }
        while (zero) {
            for (std::size_t k = 0; k < cfg.embed_dim; ++k) {
                p.theta[k * cfg.vocab_size + col] = emb_dist(rng);
                if (p.theta[k * cfg.vocab_size + col] != 0.0) zero = false;
            }
        }
    }

    auto fill_fanin = [&](std::size_t off, std::size_t count, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < count; ++i) p.theta[off + i] = dist(rng);
    };
    fill_fanin(p.w1_offset(), cfg.hidden * cfg.embed_dim, cfg.embed_dim);
    fill_fanin(p.b1_offset(), cfg.hidden, cfg.embed_dim);
    fill_fanin(p.w2_offset(), cfg.out_dim() * cfg.hidden, cfg.hidden);
    fill_fanin(p.b2_offset(), cfg.out_dim(), cfg.hidden);
    return p;
}

Tensor ParamVector::embedding_matrix() const {
    Tensor w({cfg.embed_dim, cfg.vocab_size});
    std::copy(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(w1_offset()),
              w.data.begin());
    return w;
}

namespace {

NodeId slice_leaf(Tape& tape, const ParamVector& p, std::size_t off,
                  std::vector<std::size_t> shape, bool requires_grad) {
    Tensor t(std::move(shape));
    std::copy(p.theta.begin() + static_cast<std::ptrdiff_t>(off),
              p.theta.begin() + static_cast<std::ptrdiff_t>(off) +
                  static_cast<std::ptrdiff_t>(t.numel()),
              t.data.begin());
    return tape.leaf(std::move(t), requires_grad);
}

}  // namespace

ModelGraph add_ffn_leaves(Tape& tape, const ParamVector& p, bool requires_grad) {
    const ModelConfig& cfg = p.cfg;
    ModelGraph g;
    g.w1 = slice_leaf(tape, p, p.w1_offset(), {cfg.hidden, cfg.embed_dim}, requires_grad);
    g.b1 = slice_leaf(tape, p, p.b1_offset(), {cfg.hidden}, requires_grad);
    g.w2 = slice_leaf(tape, p, p.w2_offset(), {cfg.out_dim(), cfg.hidden}, requires_grad);
    g.b2 = slice_leaf(tape, p, p.b2_offset(), {cfg.out_dim()}, requires_grad);
    return g;
}

ModelGraph add_param_leaves(Tape& tape, const ParamVector& p, bool requires_grad) {
    const ModelConfig& cfg = p.cfg;
    ModelGraph g;
    g.w = slice_leaf(tape, p, p.embed_offset(), {cfg.embed_dim, cfg.vocab_size},
                     requires_grad);
    g.w1 = slice_leaf(tape, p, p.w1_offset(), {cfg.hidden, cfg.embed_dim}, requires_grad);
    g.b1 = slice_leaf(tape, p, p.b1_offset(), {cfg.hidden}, requires_grad);
    g.w2 = slice_leaf(tape, p, p.w2_offset(), {cfg.out_dim(), cfg.hidden}, requires_grad);
    g.b2 = slice_leaf(tape, p, p.b2_offset(), {cfg.out_dim()}, requires_grad);
    return g;
}

NodeId build_predict_from_embedding(Tape& tape, const ModelGraph& g,
                                    const ModelConfig& cfg, NodeId x_embed,
                                    std::optional<NodeId> delta) {
    NodeId x = x_embed;
    if (delta) x = tape.add(x, *delta);
    NodeId pooled = tape.mean_rows(x);
    NodeId hidden = tape.tanh(tape.add(tape.matvec(g.w1, pooled), g.b1));
    NodeId logits = tape.add(tape.matvec(g.w2, hidden), g.b2);
    return cfg.task == TaskKind::Classification ? tape.softmax(logits) : logits;
}

NodeId build_predict(Tape& tape, const ModelGraph& g, const ModelConfig& cfg,
                     const std::vector<std::size_t>& tokens,
                     std::optional<NodeId> delta) {
    if (tokens.empty())
        throw std::invalid_argument("build_predict: empty token sequence");
    NodeId x = tape.embed(g.w, tokens);
    return build_predict_from_embedding(tape, g, cfg, x, delta);
}

NodeId build_task_loss(Tape& tape, NodeId prediction, const ModelConfig& cfg,
                       const Sample& sample) {
    if (cfg.task == TaskKind::Classification) {
        if (sample.label >= cfg.classes)
            throw std::out_of_range("build_task_loss: label out of range");
        return tape.scale(tape.log(tape.pick(prediction, sample.label)), -1.0);
    }
    Tensor y({std::size_t{1}});
    y.data[0] = sample.target;
    NodeId target = tape.leaf(std::move(y));
    return tape.sum(tape.square(tape.sub(prediction, target)));
}

Tensor embed(const Sample& sample, const Tensor& w) {
    const std::size_t d = w.shape[0], vsz = w.shape[1];
    Tensor out({sample.tokens.size(), d});
    for (std::size_t row = 0; row < sample.tokens.size(); ++row) {
        const std::size_t tok = sample.tokens[row];
        if (tok >= vsz)
            throw std::out_of_range("embed: token index out of range");
        for (std::size_t k = 0; k < d; ++k)
            out.data[row * d + k] = w.data[k * vsz + tok];
    }
    return out;
}

Tensor predict(const std::vector<std::size_t>& tokens, const Tensor* delta,
               const ParamVector& params) {
    Tape tape;
    ModelGraph g = add_param_leaves(tape, params, false);
    std::optional<NodeId> d;
    if (delta) {
        if (delta->shape != std::vector<std::size_t>{tokens.size(), params.cfg.embed_dim})
            throw std::invalid_argument("predict: delta shape mismatch");
        d = tape.leaf(*delta);
    }
    NodeId out = build_predict(tape, g, params.cfg, tokens, d);
    return tape.forward(out);
}

Tensor predict_from_embedding(const Tensor& x_embed, const Tensor* delta,
                              const ParamVector& params) {
    Tape tape;
    ModelGraph g = add_ffn_leaves(tape, params, false);
    NodeId x = tape.leaf(x_embed);
    std::optional<NodeId> d;
    if (delta) {
        if (!delta->same_shape(x_embed))
            throw std::invalid_argument("predict_from_embedding: delta shape mismatch");
        d = tape.leaf(*delta);
    }
    NodeId out = build_predict_from_embedding(tape, g, params.cfg, x, d);
    return tape.forward(out);
}

double task_loss(const Tensor& output, const Sample& sample, const ModelConfig& cfg) {
    if (cfg.task == TaskKind::Classification) {
        if (sample.label >= output.numel())
            throw std::out_of_range("task_loss: label out of range");
        return -std::log(std::max(output.data[sample.label], Tape::kProbFloor));
    }
    if (!std::isfinite(sample.target))
        throw std::invalid_argument("task_loss: non-finite regression target");
    const double r = output.scalar() - sample.target;
    return r * r;
}

double empirical_risk(const ParamVector& params, const std::vector<Sample>& batch) {
    if (batch.empty())
        throw std::invalid_argument("empirical_risk: empty batch");
    double total = 0.0;
    for (const auto& s : batch)
        total += task_loss(predict(s.tokens, nullptr, params), s, params.cfg);
    return total / static_cast<double>(batch.size());
}

}  // namespace arch
