#include "ckdyn/architectures.hpp"

#include <cmath>
#include <numeric>

namespace ckdyn {

using dynamics::alternating_binomial_entry;
using dynamics::BlockMatrix;

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(Shape{fan_in, fan_out});
    for (auto& v : w.data()) v = rng.uniform(-a, a);
    return w;
}

ForcingFunction ForcingFunction::glorot(const std::string& prefix, std::size_t d, Activation act, Rng& rng) {
    return from_values(prefix, glorot_uniform(d, d, rng), Tensor::zeros(Shape{d}), act);
}

ForcingFunction ForcingFunction::from_values(const std::string& prefix, Tensor weight, Tensor bias,
                                             Activation act) {
    if (weight.rank() != 2 || weight.rows() != weight.cols())
        throw DimensionError("ForcingFunction: weight must be square, got " + shape_string(weight.shape()));
    if (bias.shape() != Shape{weight.rows()})
        throw DimensionError("ForcingFunction: bias " + shape_string(bias.shape()) + " does not match weight " +
                             shape_string(weight.shape()));
    ForcingFunction f;
    f.weight = Parameter{prefix + ".W", Var::leaf(std::move(weight), prefix + ".W"), true};
    f.bias = Parameter{prefix + ".b", Var::leaf(std::move(bias), prefix + ".b"), true};
    f.activation = act;
    return f;
}

Var ForcingFunction::operator()(const Var& x) const { return activate(affine(x, weight.var, bias.var), activation); }

std::string to_string(Family f) {
    switch (f) {
        case Family::c0: return "c0";
        case Family::c1: return "c1";
        case Family::ck: return "ck";
        case Family::dense: return "dense";
    }
    return "?";
}

Family family_from_string(const std::string& s) {
    if (s == "c0") return Family::c0;
    if (s == "c1") return Family::c1;
    if (s == "ck") return Family::ck;
    if (s == "dense") return Family::dense;
    throw ContractError("unknown architecture family '" + s + "' (expected c0, c1, ck or dense)");
}

std::string to_string(Mode m) { return m == Mode::direct ? "direct" : "state_space"; }

void CkNetworkConfig::validate() const {
    if ((family == Family::ck || family == Family::dense) && (order < 1 || order > dynamics::kMaxBinomialN))
        throw ContractError("config: order k must be in [1, " + std::to_string(dynamics::kMaxBinomialN) + "], got " +
                            std::to_string(order));
    if (depth < 0) throw ContractError("config: depth must be >= 0");
    if (width < 1) throw ContractError("config: width must be >= 1");
    if (input_dim < 1) throw ContractError("config: input_dim must be >= 1");
    if (num_classes < 1) throw ContractError("config: num_classes must be >= 1");
    if (!(dl > 0.0) || !std::isfinite(dl)) throw ContractError("config: dl must be a positive finite number");
}

LayerHistory::LayerHistory(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw ContractError("LayerHistory: capacity must be >= 1");
}

LayerHistory LayerHistory::ghost(const Var& x0, int k) {
    LayerHistory h(k);
    for (int i = 0; i < k; ++i) h.window_.push_back(x0);
    return h;
}

void LayerHistory::push(Var x) {
    if (!window_.empty() && x.shape() != window_.front().shape())
        throw DimensionError("LayerHistory: pushed " + shape_string(x.shape()) + " into window of " +
                             shape_string(window_.front().shape()));
    window_.push_front(std::move(x));
    if (static_cast<int>(window_.size()) > capacity_) window_.pop_back();
}

std::size_t StateVector::embedding_dim() const {
    if (parts.empty()) return 0;
    return parts.size() * parts.front().shape().back();
}

std::vector<Tensor> StateVector::values() const {
    std::vector<Tensor> out;
    out.reserve(parts.size());
    for (const auto& p : parts) out.push_back(p.value());
    return out;
}

Var c0_step(const ForcingFunction& f, const Var& x) { return f(x); }

Var c1_step(const ForcingFunction& f, const Var& x, double dl) { return x + dl * f(x); }

Var ck_direct_step(const ForcingFunction& f, const LayerHistory& history, int k, double dl) {
    if (k < 1) throw ContractError("ck_direct_step: order must be >= 1");
    if (static_cast<int>(history.size()) < k)
        throw ContractError("ck_direct_step: order " + std::to_string(k) + " needs " + std::to_string(k) +
                            " layers of history, have " + std::to_string(history.size()));
    const auto coef = dynamics::mixed_diff_coefficients(k);
    std::vector<std::pair<double, Var>> terms;
    terms.reserve(static_cast<std::size_t>(k) + 1);
    terms.emplace_back(std::pow(dl, k), f(history[0]));
    for (int j = 1; j <= k; ++j) terms.emplace_back(-static_cast<double>(coef[j]), history[j - 1]);
    return lincomb(terms);
}

StateVector ck_state_step(const ForcingFunction& f, const StateVector& q, int k, double dl) {
    if (q.order() != k)
        throw ContractError("ck_state_step: state has " + std::to_string(q.order()) + " parts, order is " +
                            std::to_string(k));
    const auto m = dynamics::build_ck_matrices(k, 1);
    const Var forced = f(q.parts[0]);
    const double gain = std::pow(dl, k);
    StateVector next;
    next.parts.reserve(static_cast<std::size_t>(k));
    std::vector<std::pair<double, Var>> terms;
    for (int i = 0; i < k; ++i) {
        terms.clear();
        for (int j = 0; j < k; ++j)
            if (m.transition.at(i, j) != 0)
                terms.emplace_back(static_cast<double>(m.transition.at(i, j)), q.parts[static_cast<std::size_t>(j)]);
        double input = 0.0;
        for (int j = 0; j < k; ++j) input += static_cast<double>(m.input.at(i, j));
        if (input != 0.0) terms.emplace_back(input * gain, forced);
        next.parts.push_back(lincomb(terms));
    }
    return next;
}

StateVector initialize_state(const Var& x0, int k) {
    if (k < 1) throw ContractError("initialize_state: order must be >= 1");
    StateVector q;
    q.parts.push_back(x0);
    const Var zero = Var::constant(Tensor::zeros(x0.shape()));
    for (int n = 1; n < k; ++n) q.parts.push_back(zero);
    return q;
}

StateVector states_from_history(const LayerHistory& history) {
    StateVector q;
    std::vector<std::pair<double, Var>> terms;
    for (std::size_t n = 0; n < history.size(); ++n) {
        terms.clear();
        for (std::size_t j = 0; j <= n; ++j)
            terms.emplace_back(static_cast<double>(alternating_binomial_entry(static_cast<int>(n), static_cast<int>(j))),
                               history[j]);
        q.parts.push_back(n == 0 ? history[0] : lincomb(terms));
    }
    return q;
}

Var dense_direct_step(std::span<const ForcingFunction* const> forcings, const LayerHistory& history, double dl) {
    const int k = history.capacity();
    const auto m = forcings.size();
    if (!history.warm())
        throw ContractError("dense_direct_step: history holds " + std::to_string(history.size()) + " of " +
                            std::to_string(k) + " activations");
    if (m < 1 || static_cast<int>(m) > k)
        throw ContractError("dense_direct_step: " + std::to_string(m) + " forcing functions for a window of " +
                            std::to_string(k));
    std::vector<std::pair<double, Var>> terms;
    terms.reserve(m + 1);
    for (std::size_t j = 0; j < m; ++j) terms.emplace_back(dl, (*forcings[j])(history[j]));
    terms.emplace_back(1.0, history[static_cast<std::size_t>(k) - 1]);
    return lincomb(terms);
}

StateVector dense_state_step(std::span<const ForcingFunction* const> forcings, const StateVector& q, double dl) {
    const auto m = dynamics::build_dense_matrices(q.order(), 1);
    return dense_state_step(forcings, q, m.forcing, dl);
}

StateVector dense_state_step(std::span<const ForcingFunction* const> forcings, const StateVector& q,
                             const BlockMatrix& forcing_matrix, double dl) {
    const int k = q.order();
    const auto m = forcings.size();
    if (forcing_matrix.order() != k)
        throw ContractError("dense_state_step: forcing matrix of order " + std::to_string(forcing_matrix.order()) +
                            " for state with " + std::to_string(k) + " parts");
    if (m < 1 || static_cast<int>(m) > k)
        throw ContractError("dense_state_step: " + std::to_string(m) + " forcing functions for a state with " +
                            std::to_string(k) + " parts");

    // Lags x^{(l-j)} from the states, then the forcing terms evaluated on them.
    std::vector<Var> forced;
    forced.reserve(m);
    std::vector<std::pair<double, Var>> terms;
    for (std::size_t j = 0; j < m; ++j) {
        terms.clear();
        for (std::size_t i = 0; i <= j; ++i)
            terms.emplace_back(static_cast<double>(alternating_binomial_entry(static_cast<int>(j), static_cast<int>(i))),
                               q.parts[i]);
        const Var lag = j == 0 ? q.parts[0] : lincomb(terms);
        forced.push_back((*forcings[j])(lag));
    }

    StateVector next;
    next.parts.reserve(static_cast<std::size_t>(k));
    for (int n = 0; n < k; ++n) {
        terms.clear();
        terms.emplace_back(1.0, q.parts[static_cast<std::size_t>(n)]);
        for (std::size_t j = 0; j < m; ++j) {
            const auto c = forcing_matrix.at(n, static_cast<int>(j));
            if (c != 0) terms.emplace_back(static_cast<double>(c) * dl, forced[j]);
        }
        next.parts.push_back(terms.size() == 1 ? q.parts[static_cast<std::size_t>(n)] : lincomb(terms));
    }
    return next;
}

IdentityCheck dense_difference_identity_check(const dynamics::LayerSequence& trajectory,
                                              const dynamics::LayerSequence& forcing, int n, double dl,
                                              double tolerance) {
    if (n < 0) throw ContractError("dense_difference_identity_check: n must be >= 0");
    if (trajectory.size() != forcing.size() + 1)
        throw ContractError("dense_difference_identity_check: trajectory has " + std::to_string(trajectory.size()) +
                            " layers but forcing has " + std::to_string(forcing.size()) + " (expected one fewer)");
    const auto first = static_cast<std::size_t>(n);
    if (forcing.size() <= first)
        throw BoundsError("dense_difference_identity_check: order " + std::to_string(n) + " needs at least " +
                          std::to_string(n + 2) + " layers, trajectory has " + std::to_string(trajectory.size()));
    IdentityCheck result{true, 0.0};
    for (std::size_t l = first; l < forcing.size(); ++l) {
        // δ⁺(δ⁻)^n x^{(l)} = Σ_{j=0}^{n+1} (-1)^j C(n+1, j) x^{(l+1-j)}
        Tensor lhs = Tensor::zeros(Shape{trajectory.width});
        for (int j = 0; j <= n + 1; ++j)
            lhs = lhs + static_cast<double>(alternating_binomial_entry(n + 1, j)) * trajectory[l + 1 - static_cast<std::size_t>(j)];
        Tensor rhs = Tensor::zeros(Shape{forcing.width});
        for (int j = 0; j <= n; ++j)
            rhs = rhs + static_cast<double>(alternating_binomial_entry(n, j)) * dl * forcing[l - static_cast<std::size_t>(j)];
        const double dev = max_abs_diff(lhs, rhs);
        if (!(dev <= result.max_deviation)) result.max_deviation = dev;
    }
    result.holds = result.max_deviation <= tolerance;
    return result;
}

ParameterCount ck_parameter_count(int k, std::size_t d, int depth) {
    if (k < 1 || d < 1 || depth < 0) throw ContractError("ck_parameter_count: invalid arguments");
    const std::uint64_t w = static_cast<std::uint64_t>(d) * d;
    return {w * static_cast<std::uint64_t>(depth), static_cast<std::uint64_t>(d) * static_cast<std::uint64_t>(depth)};
}

ParameterCount first_order_equivalent_parameter_count(int k, std::size_t d, int depth) {
    if (k < 1 || d < 1 || depth < 0) throw ContractError("first_order_equivalent_parameter_count: invalid arguments");
    const std::uint64_t kd = static_cast<std::uint64_t>(k) * d;
    return {kd * kd * static_cast<std::uint64_t>(depth), kd * static_cast<std::uint64_t>(depth)};
}

Ratio weight_ratio(int k, std::size_t d, int depth) {
    if (depth < 1) throw ContractError("weight_ratio: depth must be >= 1");
    const auto a = ck_parameter_count(k, d, depth).weights;
    const auto b = first_order_equivalent_parameter_count(k, d, depth).weights;
    const auto g = std::gcd(a, b);
    return {a / g, b / g};
}

namespace {

dynamics::LayerSequence sample_of(const std::vector<Tensor>& layers, std::size_t b) {
    if (layers.empty()) return {};
    const std::size_t d = layers.front().cols();
    std::vector<Tensor> entries;
    entries.reserve(layers.size());
    for (const auto& t : layers) {
        const auto row = t.row(b);
        entries.emplace_back(Shape{d}, std::vector<double>(row.begin(), row.end()));
    }
    return dynamics::LayerSequence(std::move(entries), d);
}

}  // namespace

dynamics::LayerSequence Trajectory::sample_positions(std::size_t b) const { return sample_of(positions, b); }
dynamics::LayerSequence Trajectory::sample_forcing(std::size_t b) const { return sample_of(forcing, b); }

Network::Network(CkNetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    Rng rng(config_.seed);
    const std::size_t d = config_.width;
    embed_w_ = {"embed.W", Var::leaf(glorot_uniform(config_.input_dim, d, rng), "embed.W"), true};
    embed_b_ = {"embed.b", Var::leaf(Tensor::zeros(Shape{d}), "embed.b"), true};
    blocks_.reserve(static_cast<std::size_t>(config_.depth));
    for (int l = 0; l < config_.depth; ++l)
        blocks_.push_back(ForcingFunction::glorot("block" + std::to_string(l), d, config_.activation, rng));
    const std::size_t head_in =
        config_.readout == Readout::full_state ? d * static_cast<std::size_t>(config_.effective_order()) : d;
    head_w_ = {"head.W", Var::leaf(glorot_uniform(head_in, config_.num_classes, rng), "head.W"), true};
    head_b_ = {"head.b", Var::leaf(Tensor::zeros(Shape{config_.num_classes}), "head.b"), true};
}

Network Network::clone() const {
    Network copy(config_);
    auto src = parameters();
    auto dst = copy.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].var.assign(src[i].var.value());
    copy.dense_forcing_ = dense_forcing_;
    return copy;
}

std::vector<Parameter> Network::parameters() const {
    std::vector<Parameter> out{embed_w_, embed_b_};
    for (const auto& b : blocks_) {
        out.push_back(b.weight);
        out.push_back(b.bias);
    }
    out.push_back(head_w_);
    out.push_back(head_b_);
    return out;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.var.value().size();
    return n;
}

void Network::set_block(int l, ForcingFunction f) {
    auto& slot = blocks_.at(static_cast<std::size_t>(l));
    if (f.width() != config_.width)
        throw DimensionError("set_block: forcing width " + std::to_string(f.width()) + " in network of width " +
                             std::to_string(config_.width));
    f.weight.name = slot.weight.name;
    f.bias.name = slot.bias.name;
    slot = std::move(f);
}

void Network::set_dense_forcing_matrix(BlockMatrix m) {
    if (m.order() != config_.effective_order())
        throw ContractError("set_dense_forcing_matrix: order mismatch");
    dense_forcing_ = std::move(m);
}

Var Network::embed(const Tensor& inputs) const {
    if (inputs.rank() != 2 || inputs.cols() != config_.input_dim)
        throw DimensionError("forward: inputs " + shape_string(inputs.shape()) + " do not match input_dim " +
                             std::to_string(config_.input_dim));
    return affine(Var::constant(inputs), embed_w_.var, embed_b_.var);
}

std::vector<const ForcingFunction*> Network::window(int l) const {
    const int k = config_.effective_order();
    std::vector<const ForcingFunction*> fs;
    for (int j = 0; j < k && l - j >= 0; ++j) fs.push_back(&blocks_[static_cast<std::size_t>(l - j)]);
    return fs;
}

Var Network::readout(std::span<const Var> states) const {
    if (config_.readout == Readout::position) return affine(states.front(), head_w_.var, head_b_.var);
    return affine(concat_cols(states), head_w_.var, head_b_.var);
}

namespace {

void record_layer(Trajectory* rec, const Var& x, std::span<const Var> states) {
    if (!rec) return;
    rec->positions.push_back(x.value());
    std::vector<Tensor> q;
    q.reserve(states.size());
    for (const auto& s : states) q.push_back(s.value());
    rec->states.push_back(std::move(q));
}

void record_forcing(Trajectory* rec, const ForcingFunction& f, const Var& x) {
    if (rec) rec->forcing.push_back(f(Var::constant(x.value())).value());
}

}  // namespace

Var Network::run_direct(const Var& x0, Trajectory* rec) const {
    const int k = config_.effective_order();
    LayerHistory history = LayerHistory::ghost(x0, k);
    record_layer(rec, x0, states_from_history(history).parts);
    for (int l = 0; l < config_.depth; ++l) {
        const auto& f = blocks_[static_cast<std::size_t>(l)];
        record_forcing(rec, f, history[0]);
        Var next;
        switch (config_.family) {
            case Family::c0: next = c0_step(f, history[0]); break;
            case Family::c1: next = c1_step(f, history[0], config_.dl); break;
            case Family::ck: next = ck_direct_step(f, history, k, config_.dl); break;
            case Family::dense: {
                const auto fs = window(l);
                next = dense_direct_step(fs, history, config_.dl);
                break;
            }
        }
        history.push(std::move(next));
        record_layer(rec, history[0], states_from_history(history).parts);
    }
    return readout(states_from_history(history).parts);
}

Var Network::run_state(const Var& x0, Trajectory* rec) const {
    const int k = config_.effective_order();
    if (config_.family == Family::c0) return run_direct(x0, rec);
    StateVector q = initialize_state(x0, k);
    const BlockMatrix forcing_matrix =
        dense_forcing_ ? *dense_forcing_ : dynamics::build_dense_matrices(k, 1).forcing;
    record_layer(rec, q.parts[0], q.parts);
    for (int l = 0; l < config_.depth; ++l) {
        const auto& f = blocks_[static_cast<std::size_t>(l)];
        record_forcing(rec, f, q.parts[0]);
        if (config_.family == Family::dense) {
            const auto fs = window(l);
            q = dense_state_step(fs, q, forcing_matrix, config_.dl);
        } else {
            q = ck_state_step(f, q, k, config_.dl);
        }
        record_layer(rec, q.parts[0], q.parts);
    }
    return readout(q.parts);
}

Network::Output Network::forward(const Tensor& inputs, Mode mode, bool record) const {
    Output out;
    Trajectory* rec = record ? &out.trajectory : nullptr;
    const Var x0 = embed(inputs);
    out.logits = mode == Mode::direct ? run_direct(x0, rec) : run_state(x0, rec);
    return out;
}

}  // namespace ckdyn
