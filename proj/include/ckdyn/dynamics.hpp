#pragma once

// Exact finite-difference algebra over layer sequences.
//
// Layers are indexed by integers; the mesh size Δl only ever appears as a
// scalar multiplier on forcing terms, never in this module. Coefficients are
// exact integers. Operators that act on activations are templates over the
// value type so the same code runs on `Tensor`, `Var` and plain integers.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ckdyn/errors.hpp"
#include "ckdyn/tensor.hpp"

namespace ckdyn::dynamics {

inline constexpr int kMaxBinomialN = 64;

/// C(n, r) from a Pascal table built in 128-bit arithmetic; 0 when r > n.
/// Throws ContractError for n > kMaxBinomialN or negative arguments.
std::int64_t binomial(int n, int r);

/// Coefficients of x^{(l+1-j)}, j = 0..k, in δ⁺(δ⁻)^{k-1} x^{(l)}: (-1)^j C(k, j).
std::vector<std::int64_t> mixed_diff_coefficients(int k);

/// Σ_{j=0}^{n} (-1)^j C(n, j), computed term by term. Zero for every n ≥ 1.
std::int64_t alternating_binomial_sum(int n);

/// Row n (0-based) of the lower-triangular alternating binomial matrix:
/// entry j is (-1)^j C(n, j) for j ≤ n, else 0. The matrix is an involution.
std::int64_t alternating_binomial_entry(int n, int j);

struct LayerSequence {
    std::vector<Tensor> entries;  // entries[0] is the earliest layer
    std::size_t width = 0;

    LayerSequence() = default;
    LayerSequence(std::vector<Tensor> entries_, std::size_t width_);
    std::size_t size() const noexcept { return entries.size(); }
    const Tensor& operator[](std::size_t l) const { return entries[l]; }
};

Tensor forward_diff(const LayerSequence& seq, std::size_t l);
Tensor backward_diff(const LayerSequence& seq, std::size_t l);

/// (δ⁻)^{n-1} x^{(l)} = Σ_{j=0}^{n-1} (-1)^j C(n-1, j) x^{(l-j)}; n = 1 yields x^{(l)}.
Tensor backward_diff_power(const LayerSequence& seq, std::size_t l, int n);

/// q_1..q_k at layer l, q_n = (δ⁻)^{n-1} x^{(l)}.
std::vector<Tensor> extract_states(const LayerSequence& seq, std::size_t l, int k);

/// Multiplies a vector of values by the alternating binomial matrix of size
/// `in.size()`. Maps lags [x^{(l)}, …, x^{(l-n+1)}] to states [q_1, …, q_n]
/// and, being self-inverse, maps states back to lags.
template <class V>
std::vector<V> apply_alternating_binomial(std::span<const V> in) {
    // Difference table: after m passes, table[0] = Σ_j (-1)^j C(m,j) in[j].
    std::vector<V> table(in.begin(), in.end());
    std::vector<V> out;
    out.reserve(in.size());
    for (std::size_t m = 0; m < in.size(); ++m) {
        out.push_back(table[0]);
        for (std::size_t i = 0; i + m + 1 < table.size(); ++i) table[i] = table[i] - table[i + 1];
    }
    return out;
}

template <>
std::vector<std::int64_t> apply_alternating_binomial(std::span<const std::int64_t> in);

/// States q_1..q_n at one layer to lags x^{(l)}, x^{(l-1)}, …, x^{(l-n+1)}.
std::vector<Tensor> binomial_invert(std::span<const Tensor> states);
std::vector<std::int64_t> binomial_invert(std::span<const std::int64_t> states);

/// k×k array of integer scalars, each standing for scalar·Identity(d).
class BlockMatrix {
public:
    BlockMatrix(int k, std::size_t d);

    int order() const noexcept { return k_; }
    std::size_t width() const noexcept { return d_; }
    std::int64_t& at(int i, int j) { return blocks_[static_cast<std::size_t>(i * k_ + j)]; }
    std::int64_t at(int i, int j) const { return blocks_[static_cast<std::size_t>(i * k_ + j)]; }

    /// Dense (k·d)×(k·d) expansion.
    Tensor expand() const;

    /// Exact determinant of the k×k scalar pattern (fraction-free elimination).
    std::int64_t scalar_determinant() const;
    /// Determinant of the expanded matrix, scalar_determinant()^d.
    std::int64_t determinant() const;

    /// Block row i applied to parts: Σ_j block[i][j]·parts[j].
    Tensor apply_row(int i, std::span<const Tensor> parts) const;

    friend bool operator==(const BlockMatrix&, const BlockMatrix&) = default;

private:
    int k_;
    std::size_t d_;
    std::vector<std::int64_t> blocks_;
};

struct CkMatrices {
    BlockMatrix transition;  // upper-triangular all ones
    BlockMatrix input;       // identity
};

struct DenseMatrices {
    BlockMatrix transition;  // identity
    BlockMatrix forcing;     // lower-triangular alternating binomial
};

CkMatrices build_ck_matrices(int k, std::size_t d);
DenseMatrices build_dense_matrices(int k, std::size_t d);

std::string to_string(const BlockMatrix& m);

}  // namespace ckdyn::dynamics
