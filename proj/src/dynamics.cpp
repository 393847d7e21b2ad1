#include "ckdyn/dynamics.hpp"

#include <array>
#include <limits>
#include <sstream>

namespace ckdyn::dynamics {

namespace {

using Int128 = __int128;

constexpr Int128 kInt64Max = std::numeric_limits<std::int64_t>::max();

struct PascalTable {
    std::array<std::array<std::int64_t, kMaxBinomialN + 1>, kMaxBinomialN + 1> rows{};

    PascalTable() {
        for (int n = 0; n <= kMaxBinomialN; ++n) {
            rows[n][0] = 1;
            for (int r = 1; r <= n; ++r) {
                const Int128 v = static_cast<Int128>(rows[n - 1][r - 1]) + (r <= n - 1 ? rows[n - 1][r] : 0);
                if (v > kInt64Max) throw ContractError("binomial: overflow building Pascal table");
                rows[n][r] = static_cast<std::int64_t>(v);
            }
        }
    }
};

const PascalTable& pascal() {
    static const PascalTable table;
    return table;
}

void require_index(const LayerSequence& seq, std::size_t l, const char* op) {
    if (l >= seq.size())
        throw BoundsError(std::string(op) + ": layer " + std::to_string(l) + " outside sequence of length " +
                          std::to_string(seq.size()));
}

}  // namespace

std::int64_t binomial(int n, int r) {
    if (n < 0 || r < 0) throw ContractError("binomial: arguments must be non-negative");
    if (n > kMaxBinomialN)
        throw ContractError("binomial: n = " + std::to_string(n) + " exceeds supported maximum " +
                            std::to_string(kMaxBinomialN));
    if (r > n) return 0;
    return pascal().rows[n][r];
}

std::vector<std::int64_t> mixed_diff_coefficients(int k) {
    if (k < 1) throw ContractError("mixed_diff_coefficients: order must be >= 1 (no forward difference at k = 0)");
    std::vector<std::int64_t> c(static_cast<std::size_t>(k) + 1);
    for (int j = 0; j <= k; ++j) c[j] = (j % 2 ? -1 : 1) * binomial(k, j);
    return c;
}

std::int64_t alternating_binomial_sum(int n) {
    if (n < 1) throw ContractError("alternating_binomial_sum: n must be >= 1");
    Int128 s = 0;
    for (int j = 0; j <= n; ++j) s += (j % 2 ? -1 : 1) * static_cast<Int128>(binomial(n, j));
    return static_cast<std::int64_t>(s);
}

std::int64_t alternating_binomial_entry(int n, int j) {
    if (j > n) return 0;
    return (j % 2 ? -1 : 1) * binomial(n, j);
}

LayerSequence::LayerSequence(std::vector<Tensor> entries_, std::size_t width_)
    : entries(std::move(entries_)), width(width_) {
    for (const auto& e : entries)
        if (e.shape() != Shape{width})
            throw DimensionError("LayerSequence: entry of shape " + shape_string(e.shape()) + " in sequence of width " +
                                 std::to_string(width));
}

Tensor forward_diff(const LayerSequence& seq, std::size_t l) {
    require_index(seq, l + 1, "forward_diff");
    return seq[l + 1] - seq[l];
}

Tensor backward_diff(const LayerSequence& seq, std::size_t l) {
    require_index(seq, l, "backward_diff");
    if (l == 0) throw BoundsError("backward_diff: layer 0 has no predecessor");
    return seq[l] - seq[l - 1];
}

Tensor backward_diff_power(const LayerSequence& seq, std::size_t l, int n) {
    if (n < 1) throw ContractError("backward_diff_power: order n must be >= 1");
    require_index(seq, l, "backward_diff_power");
    const auto lag = static_cast<std::size_t>(n - 1);
    if (l < lag)
        throw BoundsError("backward_diff_power: order " + std::to_string(n) + " at layer " + std::to_string(l) +
                          " needs lag " + std::to_string(lag) + " (history back to layer l-" + std::to_string(lag) +
                          ")");
    Tensor acc = seq[l];
    for (int j = 1; j < n; ++j)
        acc = acc + static_cast<double>(alternating_binomial_entry(n - 1, j)) * seq[l - static_cast<std::size_t>(j)];
    return acc;
}

std::vector<Tensor> extract_states(const LayerSequence& seq, std::size_t l, int k) {
    std::vector<Tensor> q;
    q.reserve(static_cast<std::size_t>(k));
    for (int n = 1; n <= k; ++n) q.push_back(backward_diff_power(seq, l, n));
    return q;
}

template <>
std::vector<std::int64_t> apply_alternating_binomial(std::span<const std::int64_t> in) {
    std::vector<std::int64_t> out;
    out.reserve(in.size());
    for (std::size_t m = 0; m < in.size(); ++m) {
        Int128 acc = 0;
        for (std::size_t j = 0; j <= m; ++j)
            acc += static_cast<Int128>(alternating_binomial_entry(static_cast<int>(m), static_cast<int>(j))) * in[j];
        out.push_back(static_cast<std::int64_t>(acc));
    }
    return out;
}

std::vector<Tensor> binomial_invert(std::span<const Tensor> states) {
    if (states.empty()) throw ContractError("binomial_invert: need at least one state");
    for (const auto& s : states)
        if (s.shape() != states.front().shape())
            throw DimensionError("binomial_invert: state shapes differ: " + shape_string(states.front().shape()) +
                                 " vs " + shape_string(s.shape()));
    return apply_alternating_binomial(states);
}

std::vector<std::int64_t> binomial_invert(std::span<const std::int64_t> states) {
    if (states.empty()) throw ContractError("binomial_invert: need at least one state");
    return apply_alternating_binomial(states);
}

BlockMatrix::BlockMatrix(int k, std::size_t d) : k_(k), d_(d) {
    if (k < 1) throw ContractError("BlockMatrix: order must be >= 1");
    if (d < 1) throw ContractError("BlockMatrix: width must be >= 1");
    blocks_.assign(static_cast<std::size_t>(k * k), 0);
}

Tensor BlockMatrix::expand() const {
    const std::size_t n = static_cast<std::size_t>(k_) * d_;
    Tensor out(Shape{n, n});
    for (int i = 0; i < k_; ++i)
        for (int j = 0; j < k_; ++j)
            for (std::size_t t = 0; t < d_; ++t)
                out.at(static_cast<std::size_t>(i) * d_ + t, static_cast<std::size_t>(j) * d_ + t) =
                    static_cast<double>(at(i, j));
    return out;
}

std::int64_t BlockMatrix::scalar_determinant() const {
    // Bareiss elimination: every intermediate is an exact integer minor.
    const int n = k_;
    std::vector<Int128> m(blocks_.begin(), blocks_.end());
    auto e = [&](int i, int j) -> Int128& { return m[static_cast<std::size_t>(i * n + j)]; };
    int sign = 1;
    Int128 prev = 1;
    for (int p = 0; p < n - 1; ++p) {
        if (e(p, p) == 0) {
            int swap = -1;
            for (int r = p + 1; r < n; ++r)
                if (e(r, p) != 0) {
                    swap = r;
                    break;
                }
            if (swap < 0) return 0;
            for (int c = 0; c < n; ++c) std::swap(e(p, c), e(swap, c));
            sign = -sign;
        }
        for (int i = p + 1; i < n; ++i)
            for (int j = p + 1; j < n; ++j) e(i, j) = (e(i, j) * e(p, p) - e(i, p) * e(p, j)) / prev;
        prev = e(p, p);
    }
    return static_cast<std::int64_t>(sign * e(n - 1, n - 1));
}

std::int64_t BlockMatrix::determinant() const {
    const std::int64_t s = scalar_determinant();
    Int128 acc = 1;
    for (std::size_t t = 0; t < d_; ++t) {
        acc *= s;
        if (acc > kInt64Max || acc < -kInt64Max) throw ContractError("BlockMatrix::determinant: overflow");
    }
    return static_cast<std::int64_t>(acc);
}

Tensor BlockMatrix::apply_row(int i, std::span<const Tensor> parts) const {
    if (static_cast<int>(parts.size()) != k_)
        throw ContractError("BlockMatrix::apply_row: expected " + std::to_string(k_) + " parts, got " +
                            std::to_string(parts.size()));
    Tensor acc = Tensor::zeros(parts.front().shape());
    for (int j = 0; j < k_; ++j)
        if (at(i, j) != 0) acc = acc + static_cast<double>(at(i, j)) * parts[static_cast<std::size_t>(j)];
    return acc;
}

CkMatrices build_ck_matrices(int k, std::size_t d) {
    CkMatrices m{BlockMatrix(k, d), BlockMatrix(k, d)};
    for (int i = 0; i < k; ++i) {
        for (int j = i; j < k; ++j) m.transition.at(i, j) = 1;
        m.input.at(i, i) = 1;
    }
    return m;
}

DenseMatrices build_dense_matrices(int k, std::size_t d) {
    DenseMatrices m{BlockMatrix(k, d), BlockMatrix(k, d)};
    for (int i = 0; i < k; ++i) {
        m.transition.at(i, i) = 1;
        for (int j = 0; j <= i; ++j) m.forcing.at(i, j) = alternating_binomial_entry(i, j);
    }
    return m;
}

std::string to_string(const BlockMatrix& m) {
    std::ostringstream os;
    os << '[';
    for (int i = 0; i < m.order(); ++i) {
        if (i) os << ", ";
        os << '[';
        for (int j = 0; j < m.order(); ++j) os << (j ? "," : "") << m.at(i, j);
        os << ']';
    }
    os << ']';
    return os.str();
}

}  // namespace ckdyn::dynamics
