#pragma once

// Reverse-mode automatic differentiation over dense float64 tensors.
//
// A forward pass builds a graph of `Var` handles eagerly. Calling `backward`
// on a scalar root accumulates gradients into every reachable leaf that
// requires them, then releases the interior of the graph. A graph can be
// differentiated once; parameters persist across graphs and keep
// accumulating until `zero_grad`.

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ckdyn/tensor.hpp"

namespace ckdyn {

class Var;

namespace detail {

struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool consumed = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads `grad` of this node and accumulates into parents that require it.
    std::function<void(Node&)> backward;

    void accumulate(const Tensor& g);
};

// Test hook: adds `parent` to the parent list of `child` without any checks.
void connect_for_testing(const Var& child, const Var& parent);

}  // namespace detail

class Var {
public:
    Var() = default;

    static Var constant(Tensor value);
    static Var leaf(Tensor value, std::string name = {});

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->has_grad; }
    // Accumulated gradient; zeros if nothing has flowed here yet.
    Tensor grad() const;
    const std::string& name() const { return node_->name; }
    bool valid() const noexcept { return static_cast<bool>(node_); }

    // Leaf mutation, used by optimizers and checkpoint loading only.
    void assign(Tensor value) const;
    void zero_grad() const;

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& shared() const { return node_; }

private:
    explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    friend Var make_op(Tensor value, std::vector<Var> parents, std::function<void(detail::Node&)> backward);
    std::shared_ptr<detail::Node> node_;
};

// Extension point for ops defined outside this file. `backward` receives the
// new node; its `parents` are in the order given here.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(detail::Node&)> backward);

struct Parameter {
    std::string name;
    Var var;
    bool trainable = true;
};

using GradientMap = std::map<std::string, Tensor>;

/// Differentiates a scalar root. Returns gradients of every named leaf that
/// requires gradients and is reachable from `root`.
GradientMap backward(const Var& root);

Var matmul(const Var& a, const Var& b);
// x·W + b for x of shape [B×n] or [n], W [n×m], b [m].
Var affine(const Var& x, const Var& weight, const Var& bias);

// Elementwise binary ops. Shapes must match, or one side is a one-element tensor.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var leaky_relu(const Var& a, double slope);

enum class Activation { tanh, leaky_relu, sigmoid };
inline constexpr double kLeakySlope = 0.1;
Var activate(const Var& a, Activation act);
std::string to_string(Activation act);
Activation activation_from_string(const std::string& s);

Var sum(const Var& a);
Var mean(const Var& a);
Var dot(const Var& a, const Var& b);

// Σ coef_i · term_i over same-shape terms, as one node.
Var lincomb(std::span<const std::pair<double, Var>> terms);

// Horizontal concatenation of [B×n_i] matrices.
Var concat_cols(std::span<const Var> parts);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace ckdyn
