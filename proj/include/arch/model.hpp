#pragma once

#include <optional>
#include <random>

#include "arch/autodiff.hpp"
#include "arch/data.hpp"
#include "arch/tensor.hpp"

namespace arch {

enum class TaskKind { Classification, Regression };

struct ModelConfig {
    std::size_t embed_dim = 16;
    std::size_t vocab_size = 1000;
    std::size_t hidden = 64;
    std::size_t classes = 2;
    TaskKind task = TaskKind::Classification;

    std::size_t out_dim() const {
        return task == TaskKind::Classification ? classes : 1;
    }
};

// Flat parameter vector over [embedding | W1 | b1 | W2 | b2].
// Mean-pooled embedding bag followed by a 2-layer tanh FFN with a
// softmax (classification) or linear (regression) head.
struct ParamVector {
    ModelConfig cfg;
    std::vector<double> theta;

    static ParamVector init(const ModelConfig& cfg, std::mt19937_64& rng);

    std::size_t size() const { return theta.size(); }

    std::size_t embed_offset() const { return 0; }
    std::size_t w1_offset() const { return cfg.embed_dim * cfg.vocab_size; }
    std::size_t b1_offset() const { return w1_offset() + cfg.hidden * cfg.embed_dim; }
    std::size_t w2_offset() const { return b1_offset() + cfg.hidden; }
    std::size_t b2_offset() const { return w2_offset() + cfg.out_dim() * cfg.hidden; }

    Tensor embedding_matrix() const;  // (d x |V|)
};

// Parameter leaves of one model instance on a tape.
struct ModelGraph {
    NodeId w = static_cast<NodeId>(-1);  // unset when built from an embedding
    NodeId w1 = 0, b1 = 0, w2 = 0, b2 = 0;
};

ModelGraph add_param_leaves(Tape& tape, const ParamVector& params, bool requires_grad);

// FFN leaves only; for tapes whose input is an already-embedded sample.
ModelGraph add_ffn_leaves(Tape& tape, const ParamVector& params, bool requires_grad);

// Builds f(x + delta, theta) on the tape; pass delta = nullopt for clean input.
// Output node is a probability simplex (classification) or a length-1 tensor.
NodeId build_predict(Tape& tape, const ModelGraph& g, const ModelConfig& cfg,
                     const std::vector<std::size_t>& tokens,
                     std::optional<NodeId> delta = std::nullopt);

// Same head applied to an embedded-input node (sentence length x d).
NodeId build_predict_from_embedding(Tape& tape, const ModelGraph& g,
                                    const ModelConfig& cfg, NodeId x_embed,
                                    std::optional<NodeId> delta = std::nullopt);

// On-tape task loss: cross-entropy with natural log, or squared error.
NodeId build_task_loss(Tape& tape, NodeId prediction, const ModelConfig& cfg,
                       const Sample& sample);

// Standalone embedding lookup, rows = W[:, token].
Tensor embed(const Sample& sample, const Tensor& w);

// One forward pass on a fresh tape.
Tensor predict(const std::vector<std::size_t>& tokens, const Tensor* delta,
               const ParamVector& params);

// Forward pass from a precomputed embedding; avoids staging the embedding
// matrix on the tape.
Tensor predict_from_embedding(const Tensor& x_embed, const Tensor* delta,
                              const ParamVector& params);

double task_loss(const Tensor& output, const Sample& sample, const ModelConfig& cfg);

// Mean task loss over the batch.
double empirical_risk(const ParamVector& params, const std::vector<Sample>& batch);

}  // namespace arch
