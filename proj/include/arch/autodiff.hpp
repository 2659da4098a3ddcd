#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "arch/tensor.hpp"

namespace arch {

enum class Op : std::uint8_t {
    Leaf,
    Add,        // elementwise a + b
    Sub,        // elementwise a - b
    MatVec,     // (r x c) matrix times (c) vector
    Embed,      // column gather from a (d x V) matrix, one row per token
    MeanRows,   // (r x c) -> (c), arithmetic mean over rows
    Tanh,
    Relu,
    Softmax,    // vector -> simplex, max-subtracted
    Log,        // elementwise ln, inputs clipped to >= 1e-12
    Sum,        // all entries -> scalar
    Square,     // elementwise
    Scale,      // multiply by a fixed scalar
    Pick,       // select one entry of a vector -> scalar
    KlDiv,      // scalar KL(p || q), entries clipped to [1e-12, 1]
    StopGrad,   // identity forward, blocks the adjoint
};

using NodeId = std::size_t;

// Single-use computation record. Leaves are bound with set_leaf, forward()
// evaluates every node in insertion order, backward() accumulates adjoints
// for leaves flagged requires_grad.
class Tape {
public:
    static constexpr double kProbFloor = 1e-12;

    NodeId leaf(std::vector<std::size_t> shape, bool requires_grad = false);
    NodeId leaf(Tensor value, bool requires_grad = false);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId matvec(NodeId m, NodeId v);
    NodeId embed(NodeId w, std::vector<std::size_t> tokens);
    NodeId mean_rows(NodeId x);
    NodeId tanh(NodeId x);
    NodeId relu(NodeId x);
    NodeId softmax(NodeId x);
    NodeId log(NodeId x);
    NodeId sum(NodeId x);
    NodeId square(NodeId x);
    NodeId scale(NodeId x, double factor);
    NodeId pick(NodeId x, std::size_t index);
    NodeId kl_div(NodeId p, NodeId q);
    NodeId stop_grad(NodeId x);

    void set_leaf(NodeId id, const Tensor& value);

    // Evaluates all nodes; values are retained for backward.
    const Tensor& forward();
    const Tensor& forward(NodeId output);

    // Reverse sweep from `output` seeded with `seed` (shape of output).
    // Gradients are accumulated only for requires_grad leaves and the
    // interior nodes between them and the output.
    void backward(NodeId output, const Tensor& seed);
    void backward(NodeId output);  // seed = ones

    const Tensor& value(NodeId id) const;
    const Tensor& grad(NodeId id) const;

    // Max over coordinates of |analytic - central difference| /
    // (|central difference| + 1e-12) for a scalar output w.r.t. one leaf.
    double grad_check(NodeId output, NodeId leaf, double h);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Op op = Op::Leaf;
        NodeId a = 0, b = 0;
        double factor = 1.0;           // Scale
        std::size_t index = 0;         // Pick
        std::vector<std::size_t> tokens;  // Embed
        Tensor value;
        Tensor adjoint;
        bool requires_grad = false;    // leaves only
        bool needs_grad = false;       // reachable-from-required flag
        bool has_value = false;
    };

    NodeId push(Node node);
    void eval(Node& n);
    void require_shapes(const Tensor& a, const Tensor& b, const char* op) const;

    std::vector<Node> nodes_;
    bool forward_done_ = false;
};

}  // namespace arch
