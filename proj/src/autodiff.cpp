#include "arch/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace arch {

namespace {

double clip_prob(double p) {
    return std::clamp(p, Tape::kProbFloor, 1.0);
}

}  // namespace

NodeId Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    forward_done_ = false;
    return nodes_.size() - 1;
}

NodeId Tape::leaf(std::vector<std::size_t> shape, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = Tensor(std::move(shape));
    n.requires_grad = requires_grad;
    n.needs_grad = requires_grad;
    n.has_value = true;
    return push(std::move(n));
}

NodeId Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.needs_grad = requires_grad;
    n.has_value = true;
    return push(std::move(n));
}

void Tape::require_shapes(const Tensor& a, const Tensor& b, const char* op) const {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape) + " vs " + shape_str(b.shape));
}

NodeId Tape::add(NodeId a, NodeId b) {
    require_shapes(nodes_[a].value, nodes_[b].value, "add");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.value = Tensor(nodes_[a].value.shape);
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    require_shapes(nodes_[a].value, nodes_[b].value, "sub");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.value = Tensor(nodes_[a].value.shape);
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    return push(std::move(n));
}

NodeId Tape::matvec(NodeId m, NodeId v) {
    const Tensor& mv = nodes_[m].value;
    const Tensor& vv = nodes_[v].value;
    if (mv.shape.size() != 2 || mv.shape[1] != vv.numel())
        throw std::invalid_argument("matvec: shape mismatch " + shape_str(mv.shape) +
                                    " vs " + shape_str(vv.shape));
    Node n;
    n.op = Op::MatVec;
    n.a = m;
    n.b = v;
    n.value = Tensor({mv.shape[0]});
    n.needs_grad = nodes_[m].needs_grad || nodes_[v].needs_grad;
    return push(std::move(n));
}

NodeId Tape::embed(NodeId w, std::vector<std::size_t> tokens) {
    const Tensor& wv = nodes_[w].value;
    if (wv.shape.size() != 2)
        throw std::invalid_argument("embed: weight matrix must be 2-D");
    for (std::size_t t : tokens)
        if (t >= wv.shape[1])
            throw std::out_of_range("embed: token index " + std::to_string(t) +
                                    " out of range for vocab " +
                                    std::to_string(wv.shape[1]));
    Node n;
    n.op = Op::Embed;
    n.a = w;
    n.tokens = std::move(tokens);
    n.value = Tensor({n.tokens.size(), wv.shape[0]});
    n.needs_grad = nodes_[w].needs_grad;
    return push(std::move(n));
}

NodeId Tape::mean_rows(NodeId x) {
    const Tensor& xv = nodes_[x].value;
    if (xv.shape.size() != 2 || xv.shape[0] == 0)
        throw std::invalid_argument("mean_rows: need a nonempty 2-D input");
    Node n;
    n.op = Op::MeanRows;
    n.a = x;
    n.value = Tensor({xv.shape[1]});
    n.needs_grad = nodes_[x].needs_grad;
    return push(std::move(n));
}

NodeId Tape::tanh(NodeId x) {
    Node n;
    n.op = Op::Tanh;
    n.a = x;
    n.value = Tensor(nodes_[x].value.shape);
    n.needs_grad = nodes_[x].needs_grad;
    return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
    Node n;
    n.op = Op::Relu;
    n.a = x;
    n.value = Tensor(nodes_[x].value.shape);
    n.needs_grad = nodes_[x].needs_grad;
    return push(std::move(n));
}

NodeId Tape::softmax(NodeId x) {
    Node n;
    n.op = Op::Softmax;
    n.a = x;
    n.value = Tensor(nodes_[x].value.shape);
    n.needs_grad = nodes_[x].needs_grad;
    return push(std::move(n));
}

NodeId Tape::log(NodeId x) {
    Node n;
    n.op = Op::Log;
    n.a = x;
    n.value = Tensor(nodes_[x].value.shape);
    n.needs_grad = nodes_[x].needs_grad;
    return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
    Node n;
    n.op = Op::Sum;
    n.a = x;
    n.value = Tensor({std::size_t{1}});
    n.needs_grad = nodes_[x].needs_grad;
    return push(std::move(n));
}

NodeId Tape::square(NodeId x) {
    Node n;
    n.op = Op::Square;
    n.a = x;
    n.value = Tensor(nodes_[x].value.shape);
    n.needs_grad = nodes_[x].needs_grad;
    return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double factor) {
    Node n;
    n.op = Op::Scale;
    n.a = x;
    n.factor = factor;
    n.value = Tensor(nodes_[x].value.shape);
    n.needs_grad = nodes_[x].needs_grad;
    return push(std::move(n));
}

NodeId Tape::pick(NodeId x, std::size_t index) {
    if (index >= nodes_[x].value.numel())
        throw std::out_of_range("pick: index out of range");
    Node n;
    n.op = Op::Pick;
    n.a = x;
    n.index = index;
    n.value = Tensor({std::size_t{1}});
    n.needs_grad = nodes_[x].needs_grad;
    return push(std::move(n));
}

NodeId Tape::kl_div(NodeId p, NodeId q) {
    require_shapes(nodes_[p].value, nodes_[q].value, "kl_div");
    Node n;
    n.op = Op::KlDiv;
    n.a = p;
    n.b = q;
    n.value = Tensor({std::size_t{1}});
    n.needs_grad = nodes_[p].needs_grad || nodes_[q].needs_grad;
    return push(std::move(n));
}

NodeId Tape::stop_grad(NodeId x) {
    Node n;
    n.op = Op::StopGrad;
    n.a = x;
    n.value = Tensor(nodes_[x].value.shape);
    n.needs_grad = false;
    return push(std::move(n));
}

void Tape::set_leaf(NodeId id, const Tensor& value) {
    Node& n = nodes_.at(id);
    if (n.op != Op::Leaf)
        throw std::invalid_argument("set_leaf: node is not a leaf");
    if (!n.value.same_shape(value))
        throw std::invalid_argument("set_leaf: shape mismatch " +
                                    shape_str(n.value.shape) + " vs " +
                                    shape_str(value.shape));
    n.value = value;
    forward_done_ = false;
}

void Tape::eval(Node& n) {
    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add: {
            const auto& a = nodes_[n.a].value.data;
            const auto& b = nodes_[n.b].value.data;
            for (std::size_t i = 0; i < a.size(); ++i) n.value.data[i] = a[i] + b[i];
            break;
        }
        case Op::Sub: {
            const auto& a = nodes_[n.a].value.data;
            const auto& b = nodes_[n.b].value.data;
            for (std::size_t i = 0; i < a.size(); ++i) n.value.data[i] = a[i] - b[i];
            break;
        }
        case Op::MatVec: {
            const Tensor& m = nodes_[n.a].value;
            const Tensor& v = nodes_[n.b].value;
            const std::size_t r = m.shape[0], c = m.shape[1];
            for (std::size_t i = 0; i < r; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < c; ++j) s += m.data[i * c + j] * v.data[j];
                n.value.data[i] = s;
            }
            break;
        }
        case Op::Embed: {
            const Tensor& w = nodes_[n.a].value;
            const std::size_t d = w.shape[0], vsz = w.shape[1];
            for (std::size_t row = 0; row < n.tokens.size(); ++row) {
                const std::size_t tok = n.tokens[row];
                for (std::size_t k = 0; k < d; ++k)
                    n.value.data[row * d + k] = w.data[k * vsz + tok];
            }
            break;
        }
        case Op::MeanRows: {
            const Tensor& x = nodes_[n.a].value;
            const std::size_t r = x.shape[0], c = x.shape[1];
            for (std::size_t j = 0; j < c; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < r; ++i) s += x.data[i * c + j];
                n.value.data[j] = s / static_cast<double>(r);
            }
            break;
        }
        case Op::Tanh: {
            const auto& a = nodes_[n.a].value.data;
            for (std::size_t i = 0; i < a.size(); ++i) n.value.data[i] = std::tanh(a[i]);
            break;
        }
        case Op::Relu: {
            const auto& a = nodes_[n.a].value.data;
            for (std::size_t i = 0; i < a.size(); ++i)
                n.value.data[i] = a[i] > 0.0 ? a[i] : 0.0;
            break;
        }
        case Op::Softmax: {
            const auto& a = nodes_[n.a].value.data;
            const double mx = *std::max_element(a.begin(), a.end());
            double z = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                n.value.data[i] = std::exp(a[i] - mx);
                z += n.value.data[i];
            }
            for (auto& v : n.value.data) v /= z;
            break;
        }
        case Op::Log: {
            const auto& a = nodes_[n.a].value.data;
            for (std::size_t i = 0; i < a.size(); ++i)
                n.value.data[i] = std::log(std::max(a[i], kProbFloor));
            break;
        }
        case Op::Sum: {
            const auto& a = nodes_[n.a].value.data;
            double s = 0.0;
            for (double v : a) s += v;
            n.value.data[0] = s;
            break;
        }
        case Op::Square: {
            const auto& a = nodes_[n.a].value.data;
            for (std::size_t i = 0; i < a.size(); ++i) n.value.data[i] = a[i] * a[i];
            break;
        }
        case Op::Scale: {
            const auto& a = nodes_[n.a].value.data;
            for (std::size_t i = 0; i < a.size(); ++i) n.value.data[i] = n.factor * a[i];
            break;
        }
        case Op::Pick:
            n.value.data[0] = nodes_[n.a].value.data[n.index];
            break;
        case Op::StopGrad:
            n.value.data = nodes_[n.a].value.data;
            break;
        case Op::KlDiv: {
            const auto& p = nodes_[n.a].value.data;
            const auto& q = nodes_[n.b].value.data;
            double s = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double pi = clip_prob(p[i]);
                const double qi = clip_prob(q[i]);
                s += pi * std::log(pi / qi);
            }
            n.value.data[0] = s;
            break;
        }
    }
    n.has_value = true;
}

const Tensor& Tape::forward() {
    if (nodes_.empty()) throw std::logic_error("forward: empty tape");
    return forward(nodes_.size() - 1);
}

const Tensor& Tape::forward(NodeId output) {
    for (auto& n : nodes_) eval(n);
    forward_done_ = true;
    return nodes_.at(output).value;
}

void Tape::backward(NodeId output) {
    Tensor seed(nodes_.at(output).value.shape);
    std::fill(seed.data.begin(), seed.data.end(), 1.0);
    backward(output, seed);
}

void Tape::backward(NodeId output, const Tensor& seed) {
    if (!forward_done_)
        throw std::logic_error("backward called before forward");
    if (!seed.same_shape(nodes_.at(output).value))
        throw std::invalid_argument("backward: seed shape mismatch");

    // Adjoints are allocated only along paths that reach a required leaf.
    for (auto& n : nodes_)
        if (n.needs_grad) n.adjoint = Tensor(n.value.shape);
    if (!nodes_[output].needs_grad) return;
    nodes_[output].adjoint = seed;

    for (std::size_t idx = output + 1; idx-- > 0;) {
        Node& n = nodes_[idx];
        if (!n.needs_grad || n.op == Op::Leaf) continue;
        const auto& g = n.adjoint.data;
        switch (n.op) {
            case Op::Leaf:
            case Op::StopGrad:
                break;
            case Op::Add: {
                if (nodes_[n.a].needs_grad) {
                    auto& da = nodes_[n.a].adjoint.data;
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                }
                if (nodes_[n.b].needs_grad) {
                    auto& db = nodes_[n.b].adjoint.data;
                    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
                }
                break;
            }
            case Op::Sub: {
                if (nodes_[n.a].needs_grad) {
                    auto& da = nodes_[n.a].adjoint.data;
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                }
                if (nodes_[n.b].needs_grad) {
                    auto& db = nodes_[n.b].adjoint.data;
                    for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
                }
                break;
            }
            case Op::MatVec: {
                const Tensor& m = nodes_[n.a].value;
                const Tensor& v = nodes_[n.b].value;
                const std::size_t r = m.shape[0], c = m.shape[1];
                if (nodes_[n.a].needs_grad) {
                    auto& dm = nodes_[n.a].adjoint.data;
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                            dm[i * c + j] += g[i] * v.data[j];
                }
                if (nodes_[n.b].needs_grad) {
                    auto& dv = nodes_[n.b].adjoint.data;
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                            dv[j] += m.data[i * c + j] * g[i];
                }
                break;
            }
            case Op::Embed: {
                if (nodes_[n.a].needs_grad) {
                    const Tensor& w = nodes_[n.a].value;
                    const std::size_t d = w.shape[0], vsz = w.shape[1];
                    auto& dw = nodes_[n.a].adjoint.data;
                    for (std::size_t row = 0; row < n.tokens.size(); ++row) {
                        const std::size_t tok = n.tokens[row];
                        for (std::size_t k = 0; k < d; ++k)
                            dw[k * vsz + tok] += g[row * d + k];
                    }
                }
                break;
            }
            case Op::MeanRows: {
                if (nodes_[n.a].needs_grad) {
                    const std::size_t r = nodes_[n.a].value.shape[0];
                    const std::size_t c = nodes_[n.a].value.shape[1];
                    auto& dx = nodes_[n.a].adjoint.data;
                    const double inv = 1.0 / static_cast<double>(r);
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                            dx[i * c + j] += g[j] * inv;
                }
                break;
            }
            case Op::Tanh: {
                if (nodes_[n.a].needs_grad) {
                    auto& dx = nodes_[n.a].adjoint.data;
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        const double t = n.value.data[i];
                        dx[i] += g[i] * (1.0 - t * t);
                    }
                }
                break;
            }
            case Op::Relu: {
                if (nodes_[n.a].needs_grad) {
                    auto& dx = nodes_[n.a].adjoint.data;
                    const auto& x = nodes_[n.a].value.data;
                    for (std::size_t i = 0; i < g.size(); ++i)
                        if (x[i] > 0.0) dx[i] += g[i];
                }
                break;
            }
            case Op::Softmax: {
                if (nodes_[n.a].needs_grad) {
                    auto& dx = nodes_[n.a].adjoint.data;
                    const auto& s = n.value.data;
                    double gs = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) gs += g[i] * s[i];
                    for (std::size_t i = 0; i < g.size(); ++i)
                        dx[i] += s[i] * (g[i] - gs);
                }
                break;
            }
            case Op::Log: {
                if (nodes_[n.a].needs_grad) {
                    auto& dx = nodes_[n.a].adjoint.data;
                    const auto& x = nodes_[n.a].value.data;
                    for (std::size_t i = 0; i < g.size(); ++i)
                        if (x[i] > kProbFloor) dx[i] += g[i] / x[i];
                }
                break;
            }
            case Op::Sum: {
                if (nodes_[n.a].needs_grad) {
                    auto& dx = nodes_[n.a].adjoint.data;
                    for (auto& v : dx) v += g[0];
                }
                break;
            }
            case Op::Square: {
                if (nodes_[n.a].needs_grad) {
                    auto& dx = nodes_[n.a].adjoint.data;
                    const auto& x = nodes_[n.a].value.data;
                    for (std::size_t i = 0; i < g.size(); ++i)
                        dx[i] += 2.0 * x[i] * g[i];
                }
                break;
            }
            case Op::Scale: {
                if (nodes_[n.a].needs_grad) {
                    auto& dx = nodes_[n.a].adjoint.data;
                    for (std::size_t i = 0; i < g.size(); ++i)
                        dx[i] += n.factor * g[i];
                }
                break;
            }
            case Op::Pick: {
                if (nodes_[n.a].needs_grad)
                    nodes_[n.a].adjoint.data[n.index] += g[0];
                break;
            }
            case Op::KlDiv: {
                const auto& p = nodes_[n.a].value.data;
                const auto& q = nodes_[n.b].value.data;
                if (nodes_[n.a].needs_grad) {
                    auto& dp = nodes_[n.a].adjoint.data;
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        const double pi = clip_prob(p[i]);
                        const double qi = clip_prob(q[i]);
                        if (p[i] > kProbFloor && p[i] < 1.0)
                            dp[i] += g[0] * (std::log(pi / qi) + 1.0);
                    }
                }
                if (nodes_[n.b].needs_grad) {
                    auto& dq = nodes_[n.b].adjoint.data;
                    for (std::size_t i = 0; i < q.size(); ++i) {
                        const double pi = clip_prob(p[i]);
                        const double qi = clip_prob(q[i]);
                        if (q[i] > kProbFloor && q[i] < 1.0)
                            dq[i] += -g[0] * pi / qi;
                    }
                }
                break;
            }
        }
    }
}

const Tensor& Tape::value(NodeId id) const { return nodes_.at(id).value; }

const Tensor& Tape::grad(NodeId id) const {
    const Node& n = nodes_.at(id);
    if (n.adjoint.data.empty() && n.value.numel() != 0)
        throw std::logic_error("grad: no adjoint recorded for this node");
    return n.adjoint;
}

double Tape::grad_check(NodeId output, NodeId leaf, double h) {
    if (h <= 0.0) throw std::invalid_argument("grad_check: h must be positive");
    forward(output);
    backward(output);
    const Tensor analytic = grad(leaf);
    Tensor point = nodes_[leaf].value;
    double worst = 0.0;
    for (std::size_t i = 0; i < point.numel(); ++i) {
        Tensor p = point;
        p.data[i] = point.data[i] + h;
        set_leaf(leaf, p);
        const double up = forward(output).scalar();
        p.data[i] = point.data[i] - h;
        set_leaf(leaf, p);
        const double down = forward(output).scalar();
        const double numeric = (up - down) / (2.0 * h);
        const double err =
            std::abs(analytic.data[i] - numeric) / (std::abs(numeric) + 1e-12);
        worst = std::max(worst, err);
    }
    set_leaf(leaf, point);
    forward(output);
    return worst;
}

}  // namespace arch
