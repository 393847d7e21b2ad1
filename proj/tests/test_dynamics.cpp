#include <gtest/gtest.h>

#include <cstdint>
#include <vector>

#include "ckdyn/dynamics.hpp"
#include "ckdyn/errors.hpp"
#include "ckdyn/rng.hpp"

using namespace ckdyn;
using namespace ckdyn::dynamics;

namespace {

LayerSequence scalars(std::initializer_list<double> values) {
    std::vector<Tensor> entries;
    for (double v : values) entries.push_back(Tensor::vector({v}));
    return LayerSequence(std::move(entries), 1);
}

LayerSequence random_sequence(std::size_t length, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> entries;
    for (std::size_t i = 0; i < length; ++i) {
        Tensor t(Shape{d});
        for (auto& v : t.data()) v = rng.normal();
        entries.push_back(std::move(t));
    }
    return LayerSequence(std::move(entries), d);
}

// Pascal table built independently of the library, in unsigned 128-bit.
unsigned __int128 pascal(int n, int r) {
    std::vector<unsigned __int128> row{1};
    for (int i = 1; i <= n; ++i) {
        std::vector<unsigned __int128> next(row.size() + 1, 0);
        for (std::size_t j = 0; j < row.size(); ++j) {
            next[j] += row[j];
            next[j + 1] += row[j];
        }
        row = std::move(next);
    }
    return r <= n ? row[static_cast<std::size_t>(r)] : 0;
}

}  // namespace

TEST(Binomial, SmallValues) {
    EXPECT_EQ(binomial(4, 2), 6);
    for (int k = 0; k <= kMaxBinomialN; ++k) EXPECT_EQ(binomial(k, 0), 1);
    EXPECT_EQ(binomial(3, 5), 0);
}

TEST(Binomial, FiftyChooseTwentyFive) {
    EXPECT_EQ(binomial(50, 25), 126410606437752LL);
    EXPECT_EQ(static_cast<unsigned __int128>(binomial(50, 25)), pascal(50, 25));
}

TEST(Binomial, PascalIdentityUpToSixtyFour) {
    for (int n = 1; n <= kMaxBinomialN; ++n)
        for (int r = 1; r <= n; ++r) EXPECT_EQ(binomial(n, r), binomial(n - 1, r - 1) + binomial(n - 1, r)) << n << "," << r;
}

TEST(Binomial, RejectsOutOfRangeArguments) {
    EXPECT_THROW(binomial(-1, 0), ContractError);
    EXPECT_THROW(binomial(kMaxBinomialN + 1, 1), ContractError);
}

TEST(ForwardDiff, ConstantSequenceGivesZero) {
    const auto seq = scalars({2.5, 2.5, 2.5});
    EXPECT_EQ(forward_diff(seq, 0), Tensor::vector({0.0}));
}

TEST(ForwardDiff, Arithmetic) {
    EXPECT_EQ(forward_diff(scalars({0, 1, 4}), 1), Tensor::vector({3.0}));
}

TEST(ForwardDiff, OutOfRangeIsBoundsError) {
    EXPECT_THROW(forward_diff(scalars({0, 1, 4}), 2), BoundsError);
}

TEST(ForwardDiff, EqualsBackwardDiffOneLayerLater) {
    const auto seq = random_sequence(8, 3, 1);
    for (std::size_t l = 0; l + 1 < seq.size(); ++l) EXPECT_EQ(forward_diff(seq, l), backward_diff(seq, l + 1));
}

TEST(BackwardDiffPower, ZerothDifferenceIsIdentity) {
    const auto seq = random_sequence(4, 2, 2);
    EXPECT_EQ(backward_diff_power(seq, 3, 1), seq[3]);
}

TEST(BackwardDiffPower, FirstDifference) {
    EXPECT_EQ(backward_diff_power(scalars({1, 3}), 1, 2), Tensor::vector({2.0}));
}

TEST(BackwardDiffPower, MatchesIteratedBackwardDiff) {
    const auto seq = random_sequence(9, 4, 3);
    for (std::size_t l = 3; l < seq.size(); ++l) {
        LayerSequence cur = seq;
        for (int pass = 0; pass < 3; ++pass) {
            std::vector<Tensor> next;
            for (std::size_t i = 1; i < cur.size(); ++i) next.push_back(backward_diff(cur, i));
            cur = LayerSequence(std::move(next), seq.width);
        }
        EXPECT_LT(max_abs_diff(backward_diff_power(seq, l, 4), cur[l - 3]), 1e-12);
    }
}

TEST(BackwardDiffPower, InsufficientHistoryNamesLag) {
    try {
        backward_diff_power(scalars({1, 2, 3}), 1, 4);
        FAIL() << "expected BoundsError";
    } catch (const BoundsError& e) {
        EXPECT_NE(std::string(e.what()).find("order 4"), std::string::npos) << e.what();
    }
}

TEST(MixedDiff, Coefficients) {
    EXPECT_EQ(mixed_diff_coefficients(1), (std::vector<std::int64_t>{1, -1}));
    EXPECT_EQ(mixed_diff_coefficients(2), (std::vector<std::int64_t>{1, -2, 1}));
    EXPECT_THROW(mixed_diff_coefficients(0), ContractError);
}

TEST(MixedDiff, FifthOrderMatchesRepeatedConvolution) {
    std::vector<std::int64_t> poly{1};
    for (int i = 0; i < 5; ++i) {
        std::vector<std::int64_t> next(poly.size() + 1, 0);
        for (std::size_t j = 0; j < poly.size(); ++j) {
            next[j] += poly[j];
            next[j + 1] -= poly[j];
        }
        poly = std::move(next);
    }
    EXPECT_EQ(mixed_diff_coefficients(5), poly);
    EXPECT_EQ(poly, (std::vector<std::int64_t>{1, -5, 10, -10, 5, -1}));
}

TEST(AlternatingSum, VanishesForEveryPositiveN) {
    EXPECT_EQ(alternating_binomial_sum(1), 0);
    EXPECT_EQ(alternating_binomial_sum(3), 0);
    EXPECT_EQ(alternating_binomial_sum(12), 0);
    for (int n = 1; n <= kMaxBinomialN; ++n) EXPECT_EQ(alternating_binomial_sum(n), 0) << n;
    EXPECT_THROW(alternating_binomial_sum(0), ContractError);
}

TEST(BinomialInvert, SingleStateIsItself) {
    const std::vector<Tensor> q{Tensor::vector({1.5, -2})};
    EXPECT_EQ(binomial_invert(q).front(), q.front());
}

TEST(BinomialInvert, ThirdLag) {
    const std::vector<Tensor> q{Tensor::vector({3}), Tensor::vector({5}), Tensor::vector({11})};
    const auto lags = binomial_invert(q);
    ASSERT_EQ(lags.size(), 3u);
    EXPECT_EQ(lags[2], Tensor::vector({3 - 2 * 5 + 11}));
}

TEST(BinomialInvert, LagsReproduceStates) {
    Rng rng(7);
    std::vector<Tensor> q;
    for (int i = 0; i < 5; ++i) {
        Tensor t(Shape{3});
        for (auto& v : t.data()) v = rng.normal();
        q.push_back(std::move(t));
    }
    auto lags = binomial_invert(q);
    std::vector<Tensor> oldest_first(lags.rbegin(), lags.rend());
    const LayerSequence seq(std::move(oldest_first), 3);
    for (int n = 1; n <= 5; ++n)
        EXPECT_LT(max_abs_diff(backward_diff_power(seq, 4, n), q[static_cast<std::size_t>(n - 1)]), 1e-12);
}

TEST(BinomialInvert, SixStateRoundTrip) {
    Rng rng(42);
    std::vector<std::int64_t> ints(6);
    for (auto& v : ints) v = static_cast<std::int64_t>(rng.below(100001)) - 50000;
    EXPECT_EQ(binomial_invert(binomial_invert(ints)), ints);

    std::vector<Tensor> xs;
    for (int i = 0; i < 6; ++i) {
        Tensor t(Shape{5});
        for (auto& v : t.data()) v = rng.uniform(-10, 10);
        xs.push_back(std::move(t));
    }
    const auto back = binomial_invert(binomial_invert(xs));
    for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_LE(max_abs_diff(back[i], xs[i]), 1e-12);
}

TEST(BinomialInvert, EntriesFormInvolution) {
    for (int n = 1; n <= 10; ++n)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                std::int64_t acc = 0;
                for (int m = 0; m < n; ++m) acc += alternating_binomial_entry(i, m) * alternating_binomial_entry(m, j);
                EXPECT_EQ(acc, i == j ? 1 : 0);
            }
}

TEST(CkMatrices, ResidualCase) {
    const auto m = build_ck_matrices(1, 4);
    EXPECT_EQ(m.transition.at(0, 0), 1);
    EXPECT_EQ(m.input.at(0, 0), 1);
}

TEST(CkMatrices, ThirdOrderPattern) {
    const auto m = build_ck_matrices(3, 2);
    const int expected[3][3] = {{1, 1, 1}, {0, 1, 1}, {0, 0, 1}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            EXPECT_EQ(m.transition.at(i, j), expected[i][j]);
            EXPECT_EQ(m.input.at(i, j), i == j ? 1 : 0);
        }
}

TEST(CkMatrices, TransitionHasUnitDeterminant) {
    for (int k = 1; k <= 8; ++k) {
        EXPECT_EQ(build_ck_matrices(k, 3).transition.scalar_determinant(), 1);
        EXPECT_EQ(build_ck_matrices(k, 3).transition.determinant(), 1);
    }
}

TEST(DenseMatrices, ResidualCase) {
    const auto m = build_dense_matrices(1, 2);
    EXPECT_EQ(m.forcing.at(0, 0), 1);
    EXPECT_EQ(m.transition.at(0, 0), 1);
}

TEST(DenseMatrices, ThirdOrderRows) {
    const auto m = build_dense_matrices(3, 1);
    const int expected[3][3] = {{1, 0, 0}, {1, -1, 0}, {1, -2, 1}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            EXPECT_EQ(m.forcing.at(i, j), expected[i][j]);
            EXPECT_EQ(m.transition.at(i, j), i == j ? 1 : 0);
        }
}

TEST(DenseMatrices, ForcingIsFullRank) {
    for (int k = 1; k <= 8; ++k) {
        const auto det = build_dense_matrices(k, 2).forcing.scalar_determinant();
        EXPECT_TRUE(det == 1 || det == -1) << k;
    }
}

TEST(BlockMatrix, ExpandScalesDeterminantWithWidth) {
    const auto m = build_dense_matrices(2, 3).forcing;
    EXPECT_EQ(m.scalar_determinant(), -1);
    EXPECT_EQ(m.determinant(), -1);
    const auto e = m.expand();
    EXPECT_EQ(e.rows(), 6u);
    EXPECT_EQ(e.at(4, 1), 1.0);
    EXPECT_EQ(e.at(4, 4), -1.0);
    EXPECT_EQ(e.at(4, 0), 0.0);
}

TEST(BlockMatrix, ApplyRowMatchesExpandedProduct) {
    const auto m = build_ck_matrices(3, 2).transition;
    const std::vector<Tensor> parts{Tensor::vector({1, 2}), Tensor::vector({3, 4}), Tensor::vector({5, 6})};
    EXPECT_EQ(m.apply_row(0, parts), Tensor::vector({9, 12}));
    EXPECT_EQ(m.apply_row(2, parts), Tensor::vector({5, 6}));
    EXPECT_THROW(m.apply_row(0, std::span(parts).first(2)), ContractError);
}
