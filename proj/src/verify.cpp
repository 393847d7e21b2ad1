#include "ckdyn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "ckdyn/architectures.hpp"
#include "ckdyn/dynamics.hpp"
#include "ckdyn/errors.hpp"
#include "ckdyn/rng.hpp"

namespace ckdyn::verify {

bool VerifyReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult& VerifyReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return c;
    throw ContractError("verify: no check named '" + name + "'");
}

namespace {

struct Case {
    int k;
    std::size_t d;
    int depth;
    std::uint64_t seed;

    std::string label() const {
        return "k=" + std::to_string(k) + " d=" + std::to_string(d) + " L=" + std::to_string(depth) +
               " seed=" + std::to_string(seed);
    }
};

// Accumulates deviations for one named check; NaN counts as a failure.
class Tally {
public:
    Tally(std::string name, double tolerance) : tolerance_(tolerance) { result_.name = std::move(name); }

    void observe(double deviation, const std::string& where) {
        ++result_.cases;
        if (std::isnan(deviation) || deviation > result_.max_deviation)
            result_.max_deviation = std::isnan(deviation) ? deviation : std::max(result_.max_deviation, deviation);
        if (!(deviation <= tolerance_)) fail(where);
    }

    void require(bool ok, const std::string& where) {
        ++result_.cases;
        if (!ok) fail(where);
    }

    CheckResult take() { return std::move(result_); }

private:
    void fail(const std::string& where) {
        if (result_.passed) result_.first_failure = where;
        result_.passed = false;
    }

    double tolerance_;
    CheckResult result_;
};

double max_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double v = max_abs_diff(a[i], b[i]);
        if (std::isnan(v)) return v;
        m = std::max(m, v);
    }
    return m;
}

double max_state_diff(const Trajectory& a, const Trajectory& b) {
    if (a.states.size() != b.states.size()) return std::numeric_limits<double>::infinity();
    double m = max_diff(a.positions, b.positions);
    for (std::size_t l = 0; l < a.states.size() && !std::isnan(m); ++l) {
        const double v = max_diff(a.states[l], b.states[l]);
        m = std::isnan(v) ? v : std::max(m, v);
    }
    return m;
}

bool bitwise_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i] == b[i])) return false;
    return true;
}

CkNetworkConfig case_config(Family family, const Case& c, double dl) {
    CkNetworkConfig cfg;
    cfg.family = family;
    cfg.order = c.k;
    cfg.depth = c.depth;
    cfg.width = c.d;
    cfg.input_dim = c.d;
    cfg.num_classes = 2;
    cfg.dl = dl;
    cfg.seed = c.seed;
    return cfg;
}

// Replaces the zero biases of a fresh network with random ones so that every
// term of the forcing is exercised.
void randomize_biases(Network& net, Rng& rng) {
    const auto& cfg = net.config();
    for (int l = 0; l < cfg.depth; ++l) {
        const auto& b = net.block(l);
        Tensor bias(Shape{cfg.width});
        for (auto& v : bias.data()) v = rng.uniform(-0.5, 0.5);
        net.set_block(l, ForcingFunction::from_values("", b.weight.var.value(), std::move(bias), cfg.activation));
    }
}

Network make_network(Family family, const Case& c, double dl) {
    Network net(case_config(family, c, dl));
    Rng rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
    randomize_biases(net, rng);
    return net;
}

Tensor random_inputs(const Case& c, std::size_t batch) {
    Rng rng(c.seed * 7919 + static_cast<std::uint64_t>(c.k * 131 + c.depth) + c.d);
    Tensor x(Shape{batch, c.d});
    for (auto& v : x.data()) v = rng.uniform(-2.0, 2.0);
    return x;
}

double case_dl(const Case& c) {
    Rng rng(c.seed + 17);
    return rng.uniform(0.1, 1.0);
}

// Rows of sample b across layers, with k-1 ghost copies of the input in front.
dynamics::LayerSequence ghosted(const Trajectory& t, std::size_t b, int k) {
    auto seq = t.sample_positions(b);
    std::vector<Tensor> entries(static_cast<std::size_t>(k - 1), seq.entries.front());
    entries.insert(entries.end(), seq.entries.begin(), seq.entries.end());
    return dynamics::LayerSequence(std::move(entries), seq.width);
}

Tensor sample_row(const Tensor& m, std::size_t b) {
    const auto r = m.row(b);
    return Tensor(Shape{r.size()}, std::vector<double>(r.begin(), r.end()));
}

}  // namespace

VerifyReport run_verification(const VerifyConfig& config) {
    if (config.orders.empty() || config.widths.empty() || config.depths.empty() || config.seeds < 1)
        throw ContractError("verify: every range must be non-empty");
    if (!(config.tolerance >= 0.0)) throw ContractError("verify: tolerance must be >= 0");

    Tally ck_eq(kCkEquivalence, config.tolerance);
    Tally extraction(kStateExtraction, config.tolerance);
    Tally dense_eq(kDenseEquivalence, config.tolerance);
    Tally collapse(kResidualCollapse, 0.0);
    Tally identity(kDenseIdentity, config.identity_tolerance);

    for (int k : config.orders)
        for (std::size_t d : config.widths)
            for (int depth : config.depths)
                for (int s = 0; s < config.seeds; ++s) {
                    const Case c{k, d, depth, config.first_seed + static_cast<std::uint64_t>(s)};
                    const std::string where = c.label();
                    const double dl = case_dl(c);
                    const Tensor x = random_inputs(c, config.batch);

                    const Network ck = make_network(Family::ck, c, dl);
                    const auto ck_direct = ck.forward(x, Mode::direct, true).trajectory;
                    const auto ck_state = ck.forward(x, Mode::state_space, true).trajectory;
                    ck_eq.observe(max_state_diff(ck_direct, ck_state), where);

                    double ext = 0.0;
                    for (std::size_t b = 0; b < config.batch; ++b) {
                        const auto seq = ghosted(ck_direct, b, k);
                        for (std::size_t l = 0; l < ck_state.states.size(); ++l) {
                            const auto q = dynamics::extract_states(seq, l + static_cast<std::size_t>(k - 1), k);
                            for (int n = 0; n < k; ++n) {
                                const double v = max_abs_diff(q[static_cast<std::size_t>(n)],
                                                              sample_row(ck_state.states[l][static_cast<std::size_t>(n)], b));
                                ext = std::isnan(v) ? v : std::max(ext, v);
                            }
                        }
                    }
                    extraction.observe(ext, where);

                    Network dense = make_network(Family::dense, c, dl);
                    if (config.flip_dense_sign) {
                        auto m = dynamics::build_dense_matrices(k, 1).forcing;
                        m.at(k - 1, k - 1) = -m.at(k - 1, k - 1);
                        dense.set_dense_forcing_matrix(std::move(m));
                    }
                    const auto dense_direct = dense.forward(x, Mode::direct, true).trajectory;
                    const auto dense_state = dense.forward(x, Mode::state_space, true).trajectory;
                    dense_eq.observe(max_state_diff(dense_direct, dense_state), where);

                    if (k == 1) {
                        const Network res = make_network(Family::c1, c, dl);
                        const auto res_direct = res.forward(x, Mode::direct, true).trajectory;
                        collapse.require(bitwise_equal(res_direct.positions, dense_direct.positions) &&
                                             bitwise_equal(res_direct.positions, dense_state.positions) &&
                                             bitwise_equal(res_direct.positions, ck_direct.positions) &&
                                             bitwise_equal(res_direct.positions, ck_state.positions),
                                         where);
                    }

                    for (std::size_t b = 0; b < config.batch; ++b) {
                        const auto traj = dense_direct.sample_positions(b);
                        const auto forcing = dense_direct.sample_forcing(b);
                        for (int n = 0; n < k; ++n) {
                            if (depth <= n) continue;
                            const auto r = dense_difference_identity_check(traj, forcing, n, dl,
                                                                           config.identity_tolerance);
                            identity.observe(r.max_deviation, where + " n=" + std::to_string(n));
                        }
                    }
                }

    Tally roundtrip(kBinomialRoundtrip, config.float_roundtrip_tolerance);
    Rng rng(config.first_seed + 4242);
    for (int n = 1; n <= 8; ++n)
        for (int rep = 0; rep < config.seeds; ++rep) {
            const std::string where = "n=" + std::to_string(n) + " rep=" + std::to_string(rep);
            std::vector<std::int64_t> ints(static_cast<std::size_t>(n));
            for (auto& v : ints) v = static_cast<std::int64_t>(rng.below(2001)) - 1000;
            roundtrip.require(dynamics::binomial_invert(dynamics::binomial_invert(ints)) == ints, where + " (integer)");

            std::vector<Tensor> xs;
            for (int i = 0; i < n; ++i) {
                Tensor t(Shape{4});
                for (auto& v : t.data()) v = rng.uniform(-10.0, 10.0);
                xs.push_back(std::move(t));
            }
            roundtrip.observe(max_diff(dynamics::binomial_invert(dynamics::binomial_invert(xs)), xs), where);
        }

    Tally sums(kAlternatingSums, 0.0);
    for (int n = 1; n <= dynamics::kMaxBinomialN; ++n)
        sums.require(dynamics::alternating_binomial_sum(n) == 0, "n=" + std::to_string(n));

    Tally ratio(kParameterRatio, 0.0);
    for (int k = 1; k <= 8; ++k)
        for (std::size_t d : config.widths) {
            const Ratio r = weight_ratio(k, d, 1);
            ratio.require(r == Ratio{1, static_cast<std::uint64_t>(k * k)},
                          "k=" + std::to_string(k) + " d=" + std::to_string(d));
            const StateVector q = initialize_state(Var::constant(Tensor::zeros(Shape{1, d})), k);
            ratio.require(q.embedding_dim() == static_cast<std::size_t>(k) * d,
                          "embedding k=" + std::to_string(k) + " d=" + std::to_string(d));
        }

    VerifyReport report;
    for (Tally* t : {&ck_eq, &extraction, &dense_eq, &collapse, &identity, &roundtrip, &sums, &ratio})
        report.checks.push_back(t->take());
    return report;
}

void print_report(std::ostream& os, const VerifyReport& report) {
    char buf[256];
    for (const auto& c : report.checks) {
        std::snprintf(buf, sizeof buf, "%-4s %-28s cases=%-6zu max_dev=%.3e", c.passed ? "ok" : "FAIL", c.name.c_str(),
                      c.cases, c.max_deviation);
        os << buf;
        if (!c.passed) os << "  first failure: " << c.first_failure;
        os << '\n';
    }
    os << (report.passed() ? "all checks passed" : "verification FAILED") << '\n';
}

}  // namespace ckdyn::verify
