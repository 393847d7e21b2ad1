#include "ckdyn/autodiff.hpp"

#include <cmath>
#include <unordered_map>

#include "ckdyn/errors.hpp"

namespace ckdyn {

namespace detail {

void Node::accumulate(const Tensor& g) {
    if (!has_grad) {
        grad = g;
        has_grad = true;
        return;
    }
    auto dst = grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void connect_for_testing(const Var& child, const Var& parent) { child.node()->parents.push_back(parent.shared()); }

}  // namespace detail

using detail::Node;

Var Var::constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var Var::leaf(Tensor value, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->name = std::move(name);
    return Var(std::move(n));
}

Tensor Var::grad() const {
    if (node_->has_grad) return node_->grad;
    return Tensor::zeros(node_->value.shape());
}

void Var::assign(Tensor value) const {
    if (value.shape() != node_->value.shape())
        throw DimensionError("assign: shape " + shape_string(value.shape()) + " does not match " +
                             shape_string(node_->value.shape()));
    node_->value = std::move(value);
}

void Var::zero_grad() const {
    node_->has_grad = false;
    node_->grad = Tensor();
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& p : parents)
        if (p.requires_grad()) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node_);
        n->backward = std::move(backward);
    }
    return Var(std::move(n));
}

GradientMap backward(const Var& root) {
    if (!root.valid()) throw ContractError("backward: empty root");
    if (root.value().size() != 1)
        throw ContractError("backward: root must be scalar, got shape " + shape_string(root.shape()));
    Node* r = root.node();
    if (r->consumed) throw StructuralError("backward: graph was already differentiated; rebuild it first");
    if (!r->requires_grad) return {};

    // Post-order DFS with gray/black marking; a gray hit is a cycle. `order`
    // owns the nodes so that releasing edges below cannot free them early.
    enum : int { gray = 1, black = 2 };
    std::unordered_map<Node*, int> color;
    std::vector<std::shared_ptr<Node>> order;
    std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{root.shared(), 0}};
    color[r] = gray;
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            std::shared_ptr<Node> p = n->parents[next++];
            if (!p->requires_grad) continue;
            auto it = color.find(p.get());
            if (it == color.end()) {
                color[p.get()] = gray;
                stack.emplace_back(std::move(p), 0);
            } else if (it->second == gray) {
                throw StructuralError("backward: cycle detected in computation graph");
            }
        } else {
            color[n.get()] = black;
            order.push_back(std::move(n));
            stack.pop_back();
        }
    }

    r->accumulate(Tensor::ones(r->value.shape()));
    GradientMap grads;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = it->get();
        if (n->backward && n->has_grad) n->backward(*n);
        if (n->parents.empty() && !n->backward) {
            if (!n->name.empty()) grads[n->name] = n->has_grad ? n->grad : Tensor::zeros(n->value.shape());
            continue;
        }
        // Release the interior of the graph.
        n->parents.clear();
        n->backward = nullptr;
        n->grad = Tensor();
        n->has_grad = false;
        n->consumed = true;
    }
    return grads;
}

namespace {

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

// C[m×p] (+)= A[m×n]·B[n×p]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t p) {
    std::size_t i = 0;
    // Four rows at a time share each load of B; per-element summation order is unchanged.
    for (; i + 4 <= m; i += 4) {
        double* __restrict c0 = c + i * p;
        double* __restrict c1 = c0 + p;
        double* __restrict c2 = c1 + p;
        double* __restrict c3 = c2 + p;
        const double* a0 = a + i * n;
        const double* a1 = a0 + n;
        const double* a2 = a1 + n;
        const double* a3 = a2 + n;
        for (std::size_t k = 0; k < n; ++k) {
            const double x0 = a0[k], x1 = a1[k], x2 = a2[k], x3 = a3[k];
            if (x0 == 0.0 && x1 == 0.0 && x2 == 0.0 && x3 == 0.0) continue;
            const double* __restrict bk = b + k * p;
            for (std::size_t j = 0; j < p; ++j) {
                const double v = bk[j];
                c0[j] += x0 * v;
                c1[j] += x1 * v;
                c2[j] += x2 * v;
                c3[j] += x3 * v;
            }
        }
    }
    for (; i < m; ++i) {
        double* ci = c + i * p;
        const double* ai = a + i * n;
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b + k * p;
            for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
        }
    }
}

// C[m×n] += G[m×p]·B[n×p]ᵀ
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t n, std::size_t p) {
    // Transposing B first keeps the inner loop a vectorizable axpy.
    std::vector<double> bt(n * p);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < p; ++j) bt[j * n + k] = b[k * p + j];
    gemm_nn(g, bt.data(), c, m, p, n);
}

// C[n×p] += A[m×n]ᵀ·G[m×p]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t n, std::size_t p) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        const double* gi = g + i * p;
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            double* ck = c + k * p;
            for (std::size_t j = 0; j < p; ++j) ck[j] += aik * gi[j];
        }
    }
}

bool broadcast_ok(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() || a.size() == 1 || b.size() == 1;
}

const Shape& broadcast_shape(const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return a.shape();
    return a.size() == 1 ? b.shape() : a.shape();
}

// Reduces an output-shaped gradient to an operand's shape (sum for broadcast scalars).
Tensor reduce_to(const Tensor& g, const Tensor& operand) {
    if (g.shape() == operand.shape()) return g;
    double s = 0.0;
    for (double v : g.data()) s += v;
    return Tensor(operand.shape(), s);
}

template <class Fwd, class Dfa, class Dfb>
Var binary(const Var& a, const Var& b, const char* op, Fwd fwd, Dfa dfa, Dfb dfb) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!broadcast_ok(av, bv))
        throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(av.shape()) + " and " +
                             shape_string(bv.shape()));
    Tensor out(broadcast_shape(av, bv));
    const bool sa = av.size() == 1 && out.size() != 1;
    const bool sb = bv.size() == 1 && out.size() != 1;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[sa ? 0 : i], bv[sb ? 0 : i]);
    return make_op(std::move(out), {a, b}, [sa, sb, dfa, dfb](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        const auto& av = pa.value;
        const auto& bv = pb.value;
        if (pa.requires_grad) {
            Tensor g(n.value.shape());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] * dfa(av[sa ? 0 : i], bv[sb ? 0 : i]);
            pa.accumulate(reduce_to(g, av));
        }
        if (pb.requires_grad) {
            Tensor g(n.value.shape());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] * dfb(av[sa ? 0 : i], bv[sb ? 0 : i]);
            pb.accumulate(reduce_to(g, bv));
        }
    });
}

// Unary elementwise op whose derivative is expressed via input x and output y.
template <class Fwd, class Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
    Tensor out = a.value();
    for (auto& v : out.data()) v = fwd(v);
    return make_op(std::move(out), {a}, [deriv](Node& n) {
        Node& p = parent(n, 0);
        Tensor g(n.value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] * deriv(p.value[i], n.value[i]);
        p.accumulate(g);
    });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
        throw DimensionError("matmul: cannot multiply " + shape_string(av.shape()) + " by " +
                             shape_string(bv.shape()));
    const std::size_t m = av.rows(), n = av.cols(), p = bv.cols();
    Tensor out(Shape{m, p});
    gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, n, p);
    return make_op(std::move(out), {a, b}, [m, n, p](Node& node) {
        Node& pa = parent(node, 0);
        Node& pb = parent(node, 1);
        if (pa.requires_grad) {
            Tensor g(Shape{m, n});
            gemm_nt(node.grad.data().data(), pb.value.data().data(), g.data().data(), m, n, p);
            pa.accumulate(g);
        }
        if (pb.requires_grad) {
            Tensor g(Shape{n, p});
            gemm_tn(pa.value.data().data(), node.grad.data().data(), g.data().data(), m, n, p);
            pb.accumulate(g);
        }
    });
}

Var affine(const Var& x, const Var& weight, const Var& bias) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    const Tensor& bv = bias.value();
    const bool vec = xv.rank() == 1;
    if ((xv.rank() != 1 && xv.rank() != 2) || wv.rank() != 2 || bv.rank() != 1)
        throw DimensionError("affine: expected x [B×n] or [n], W [n×m], b [m]; got " + shape_string(xv.shape()) +
                             ", " + shape_string(wv.shape()) + ", " + shape_string(bv.shape()));
    const std::size_t rows = vec ? 1 : xv.shape()[0];
    const std::size_t n = xv.shape().back();
    const std::size_t m = wv.cols();
    if (wv.rows() != n || bv.size() != m)
        throw DimensionError("affine: input " + shape_string(xv.shape()) + " incompatible with weight " +
                             shape_string(wv.shape()) + " and bias " + shape_string(bv.shape()));
    Tensor out(vec ? Shape{m} : Shape{rows, m});
    double* o = out.data().data();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < m; ++j) o[i * m + j] = bv[j];
    gemm_nn(xv.data().data(), wv.data().data(), o, rows, n, m);
    return make_op(std::move(out), {x, weight, bias}, [rows, n, m](Node& node) {
        Node& px = parent(node, 0);
        Node& pw = parent(node, 1);
        Node& pb = parent(node, 2);
        const double* g = node.grad.data().data();
        if (px.requires_grad) {
            Tensor gx(px.value.shape());
            gemm_nt(g, pw.value.data().data(), gx.data().data(), rows, n, m);
            px.accumulate(gx);
        }
        if (pw.requires_grad) {
            Tensor gw(Shape{n, m});
            gemm_tn(px.value.data().data(), g, gw.data().data(), rows, n, m);
            pw.accumulate(gw);
        }
        if (pb.requires_grad) {
            Tensor gb(Shape{m});
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
            pb.accumulate(gb);
        }
    });
}

Var add(const Var& a, const Var& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var scale(const Var& a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var tanh(const Var& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var leaky_relu(const Var& a, double slope) {
    return unary(a, [slope](double x) { return x >= 0 ? x : slope * x; },
                 [slope](double x, double) { return x >= 0 ? 1.0 : slope; });
}

Var activate(const Var& a, Activation act) {
    switch (act) {
        case Activation::tanh: return tanh(a);
        case Activation::leaky_relu: return leaky_relu(a, kLeakySlope);
        case Activation::sigmoid: return sigmoid(a);
    }
    throw ContractError("activate: unknown activation");
}

std::string to_string(Activation act) {
    switch (act) {
        case Activation::tanh: return "tanh";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "leaky_relu" || s == "lrelu") return Activation::leaky_relu;
    if (s == "sigmoid") return Activation::sigmoid;
    throw ContractError("unknown activation '" + s + "' (expected tanh, leaky_relu or sigmoid)");
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return make_op(Tensor::scalar(s), {a}, [](Node& n) {
        Node& p = parent(n, 0);
        p.accumulate(Tensor(p.value.shape(), n.grad[0]));
    });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var dot(const Var& a, const Var& b) {
    if (a.shape() != b.shape())
        throw DimensionError("dot: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    return sum(mul(a, b));
}

Var lincomb(std::span<const std::pair<double, Var>> terms) {
    if (terms.empty()) throw ContractError("lincomb: no terms");
    const Shape& shape = terms.front().second.shape();
    Tensor out(shape);
    std::vector<Var> parents;
    std::vector<double> coefs;
    parents.reserve(terms.size());
    coefs.reserve(terms.size());
    for (const auto& [c, v] : terms) {
        if (v.shape() != shape)
            throw DimensionError("lincomb: shape mismatch " + shape_string(shape) + " vs " +
                                 shape_string(v.shape()));
        const auto src = v.value().data();
        auto dst = out.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
        parents.push_back(v);
        coefs.push_back(c);
    }
    return make_op(std::move(out), std::move(parents), [coefs = std::move(coefs)](Node& n) {
        for (std::size_t t = 0; t < coefs.size(); ++t) {
            Node& p = parent(n, t);
            if (!p.requires_grad) continue;
            p.accumulate(coefs[t] * n.grad);
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ContractError("concat_cols: no parts");
    const std::size_t rows = parts.front().value().rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.value().rank() != 2 || p.value().rows() != rows)
            throw DimensionError("concat_cols: row mismatch at " + shape_string(p.shape()));
        widths.push_back(p.value().cols());
        total += widths.back();
    }
    Tensor out(Shape{rows, total});
    std::size_t off = 0;
    for (std::size_t t = 0; t < parts.size(); ++t) {
        const Tensor& v = parts[t].value();
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < widths[t]; ++j) out.at(i, off + j) = v.at(i, j);
        off += widths[t];
    }
    return make_op(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                   [widths, rows, total](Node& n) {
                       std::size_t off = 0;
                       for (std::size_t t = 0; t < widths.size(); ++t) {
                           Node& p = parent(n, t);
                           if (p.requires_grad) {
                               Tensor g(Shape{rows, widths[t]});
                               for (std::size_t i = 0; i < rows; ++i)
                                   for (std::size_t j = 0; j < widths[t]; ++j)
                                       g.at(i, j) = n.grad[i * total + off + j];
                               p.accumulate(g);
                           }
                           off += widths[t];
                       }
                   });
}

}  // namespace ckdyn
