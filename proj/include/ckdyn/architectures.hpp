#pragma once

// Network families driven by finite-difference dynamics on layer activations:
//
//   c0     x⁺ = f(x)
//   c1     x⁺ = x + f(x)·Δl
//   ck     Σ_j (-1)^j C(k,j) x^{(l+1-j)} = f(x^{(l)})·Δl^k
//   dense  x^{(l+1)} = Σ_{j<k} f^{(l-j)}(x^{(l-j)})·Δl + x^{(l+1-k)}
//
// The ck and dense families come in two forms that must agree: a direct
// multi-lag recurrence over a LayerHistory, and a first-order recurrence over
// the stacked state q = [q_1; …; q_k] with q_n = (δ⁻)^{n-1} x.

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ckdyn/autodiff.hpp"
#include "ckdyn/dynamics.hpp"
#include "ckdyn/rng.hpp"

namespace ckdyn {

/// f(x) = σ(x·W + b) with square W, so output width equals input width.
struct ForcingFunction {
    Parameter weight;  // [d×d]
    Parameter bias;    // [d]
    Activation activation = Activation::tanh;

    static ForcingFunction glorot(const std::string& prefix, std::size_t d, Activation act, Rng& rng);
    static ForcingFunction from_values(const std::string& prefix, Tensor weight, Tensor bias, Activation act);

    std::size_t width() const { return bias.var.value().size(); }
    Var operator()(const Var& x) const;
};

enum class Family { c0, c1, ck, dense };
enum class Mode { direct, state_space };
enum class Readout { position, full_state };

std::string to_string(Family f);
Family family_from_string(const std::string& s);
std::string to_string(Mode m);

struct CkNetworkConfig {
    Family family = Family::ck;
    int order = 1;  // k; ignored by c0/c1
    int depth = 1;  // L
    std::size_t width = 1;  // d
    std::size_t input_dim = 1;
    std::size_t num_classes = 2;
    double dl = 1.0;
    Activation activation = Activation::tanh;
    std::uint64_t seed = 0;
    Readout readout = Readout::position;

    void validate() const;
    // Order of the underlying recurrence: 1 for c0/c1.
    int effective_order() const { return (family == Family::ck || family == Family::dense) ? order : 1; }
};

/// The k most recent activations, newest first: [x^{(l)}, x^{(l-1)}, …, x^{(l-k+1)}].
class LayerHistory {
public:
    explicit LayerHistory(int capacity);

    /// Constant ghost history x^{(0)} = x^{(-1)} = … = x0.
    static LayerHistory ghost(const Var& x0, int k);

    void push(Var x);
    const Var& operator[](std::size_t i) const { return window_[i]; }
    std::size_t size() const noexcept { return window_.size(); }
    int capacity() const noexcept { return capacity_; }
    bool warm() const noexcept { return static_cast<int>(window_.size()) == capacity_; }

private:
    int capacity_;
    std::deque<Var> window_;
};

/// Stacked state [q_1; …; q_k] of the equivalent first-order system.
struct StateVector {
    std::vector<Var> parts;

    int order() const { return static_cast<int>(parts.size()); }
    /// k·d: dimension of the first-order state space.
    std::size_t embedding_dim() const;
    std::vector<Tensor> values() const;
};

Var c0_step(const ForcingFunction& f, const Var& x);
Var c1_step(const ForcingFunction& f, const Var& x, double dl);

/// Solves the order-k mixed difference equation for x^{(l+1)}.
Var ck_direct_step(const ForcingFunction& f, const LayerHistory& history, int k, double dl);

/// q_n ← Σ_{m≥n} q_m + f(q_1)·Δl^k for every n, via the block transition matrix.
StateVector ck_state_step(const ForcingFunction& f, const StateVector& q, int k, double dl);

/// q_1 = x0, higher differences zero.
StateVector initialize_state(const Var& x0, int k);

/// States of a history window, q_n = Σ_j (-1)^j C(n-1,j) x^{(l-j)}.
StateVector states_from_history(const LayerHistory& history);

/// `forcings[j]` is f^{(l-j)}. Fewer than k forcings selects the warm-up
/// (growing window) form in which layers before 0 contribute nothing.
Var dense_direct_step(std::span<const ForcingFunction* const> forcings, const LayerHistory& history, double dl);

/// q_n ← q_n + Σ_j B[n][j]·f^{(l-j)}(x^{(l-j)})·Δl, lags recovered by binomial inversion.
StateVector dense_state_step(std::span<const ForcingFunction* const> forcings, const StateVector& q, double dl);
StateVector dense_state_step(std::span<const ForcingFunction* const> forcings, const StateVector& q,
                             const dynamics::BlockMatrix& forcing_matrix, double dl);

struct IdentityCheck {
    bool holds = false;
    double max_deviation = 0.0;
    explicit operator bool() const { return holds; }
};

inline constexpr double kDenseIdentityTolerance = 1e-10;

/// Checks δ⁺(δ⁻)^n x^{(l)} = (δ⁻)^n (f^{(l)}·Δl) at every layer l where both
/// sides are defined. `forcing[l]` holds the raw f^{(l)}(x^{(l)}), one entry per
/// step, so trajectory.size() == forcing.size() + 1.
IdentityCheck dense_difference_identity_check(const dynamics::LayerSequence& trajectory,
                                              const dynamics::LayerSequence& forcing, int n, double dl,
                                              double tolerance = kDenseIdentityTolerance);

struct ParameterCount {
    std::uint64_t weights = 0;
    std::uint64_t biases = 0;
    std::uint64_t total() const { return weights + biases; }
};

/// Forcing parameters of L order-k blocks of width d: d² + d per layer.
ParameterCount ck_parameter_count(int k, std::size_t d, int depth);
/// The explicit first-order network on R^{k·d}: (k·d)² + k·d per layer.
ParameterCount first_order_equivalent_parameter_count(int k, std::size_t d, int depth);

struct Ratio {
    std::uint64_t num = 0;
    std::uint64_t den = 1;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    friend bool operator==(const Ratio&, const Ratio&) = default;
};
/// Weight-matrix ratio ck : first-order equivalent, in lowest terms.
Ratio weight_ratio(int k, std::size_t d, int depth);

/// Per-layer activations recorded by a forward pass. Every tensor is [B×d].
struct Trajectory {
    std::vector<Tensor> positions;              // x^{(0)} … x^{(L)}
    std::vector<std::vector<Tensor>> states;    // q_1..q_k at each layer 0 … L
    std::vector<Tensor> forcing;                // f^{(l)}(x^{(l)}), l = 0 … L-1 (raw, without Δl)

    std::size_t layers() const { return positions.size(); }
    dynamics::LayerSequence sample_positions(std::size_t b) const;
    dynamics::LayerSequence sample_forcing(std::size_t b) const;
};

class Network {
public:
    explicit Network(CkNetworkConfig config);
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    /// Deep copy with independent parameter storage.
    Network clone() const;

    const CkNetworkConfig& config() const { return config_; }
    std::vector<Parameter> parameters() const;
    std::size_t parameter_count() const;
    const ForcingFunction& block(int l) const { return blocks_.at(static_cast<std::size_t>(l)); }
    void set_block(int l, ForcingFunction f);
    /// Test hook: forcing matrix used by the dense state-space form.
    void set_dense_forcing_matrix(dynamics::BlockMatrix m);

    struct Output {
        Var logits;
        Trajectory trajectory;
    };

    /// inputs [B×input_dim] → logits [B×num_classes].
    Output forward(const Tensor& inputs, Mode mode, bool record = false) const;
    Var logits(const Tensor& inputs, Mode mode = Mode::direct) const { return forward(inputs, mode).logits; }

    /// Input embedding x^{(0)} = inputs·W + b.
    Var embed(const Tensor& inputs) const;

private:
    Var run_direct(const Var& x0, Trajectory* rec) const;
    Var run_state(const Var& x0, Trajectory* rec) const;
    Var readout(std::span<const Var> states) const;
    std::vector<const ForcingFunction*> window(int l) const;

    CkNetworkConfig config_;
    Parameter embed_w_;
    Parameter embed_b_;
    std::vector<ForcingFunction> blocks_;
    Parameter head_w_;
    Parameter head_b_;
    std::optional<dynamics::BlockMatrix> dense_forcing_;
};

/// Uniform[-a, a] with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace ckdyn
