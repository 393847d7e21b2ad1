#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ckdyn/architectures.hpp"
#include "ckdyn/errors.hpp"
#include "ckdyn/rng.hpp"

using namespace ckdyn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = scale * rng.normal();
    return t;
}

ForcingFunction random_forcing(std::size_t d, Rng& rng, Activation act = Activation::tanh) {
    return ForcingFunction::from_values("f", random_tensor({d, d}, rng, 0.7), random_tensor({d}, rng, 0.5), act);
}

ForcingFunction zero_forcing(std::size_t d) {
    return ForcingFunction::from_values("f", Tensor::zeros({d, d}), Tensor::zeros({d}), Activation::tanh);
}

// Width-1 forcing with f ≡ 0.5 everywhere.
ForcingFunction half_forcing() {
    return ForcingFunction::from_values("f", Tensor::zeros({1, 1}), Tensor::zeros({1}), Activation::sigmoid);
}

Var scalar_state(double v) { return Var::constant(Tensor::vector({v})); }

CkNetworkConfig config(Family family, int k, int depth, std::size_t d = 3, std::uint64_t seed = 0) {
    CkNetworkConfig cfg;
    cfg.family = family;
    cfg.order = k;
    cfg.depth = depth;
    cfg.width = d;
    cfg.input_dim = 5;
    cfg.num_classes = 4;
    cfg.dl = 0.4;
    cfg.seed = seed;
    return cfg;
}

// Gives every block a random bias, since fresh networks start with zero biases.
void randomize_biases(Network& net, Rng& rng) {
    for (int l = 0; l < net.config().depth; ++l) {
        const auto& b = net.block(l);
        net.set_block(l, ForcingFunction::from_values("", b.weight.var.value(),
                                                      random_tensor({net.config().width}, rng, 0.5),
                                                      net.config().activation));
    }
}

}  // namespace

TEST(Forcing, ZeroParametersGiveZero) {
    const auto f = zero_forcing(3);
    EXPECT_EQ(c0_step(f, Var::constant(Tensor::vector({1, -2, 3}))).value(), Tensor::zeros({3}));
}

TEST(Forcing, SigmoidAtZeroInputIsSigmoidOfBias) {
    const Tensor b = Tensor::vector({-1.0, 0.0, 2.0});
    const auto f = ForcingFunction::from_values("f", Tensor::identity(3), b, Activation::sigmoid);
    const Tensor out = c0_step(f, Var::constant(Tensor::zeros({3}))).value();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(out[i], 1.0 / (1.0 + std::exp(-b[i])));
}

TEST(Forcing, MatchesIndependentEvaluation) {
    Rng rng(4);
    const auto f = random_forcing(4, rng);
    const Tensor x = random_tensor({4}, rng);
    const Tensor& w = f.weight.var.value();
    const Tensor& b = f.bias.var.value();
    const Tensor out = c0_step(f, Var::constant(x)).value();
    for (std::size_t j = 0; j < 4; ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < 4; ++i) acc += x[i] * w.at(i, j);
        EXPECT_NEAR(out[j], std::tanh(acc), 1e-15);
    }
}

TEST(Forcing, RejectsNonSquareWeight) {
    EXPECT_THROW(ForcingFunction::from_values("f", Tensor::zeros({2, 3}), Tensor::zeros({3}), Activation::tanh),
                 DimensionError);
}

TEST(C1Step, ZeroForcingIsIdentityFlow) {
    const Var x = Var::constant(Tensor::vector({0.3, -1.2}));
    EXPECT_EQ(c1_step(zero_forcing(2), x, 0.7).value(), x.value());
}

TEST(C1Step, VanishingMeshLeavesInputUnchanged) {
    Rng rng(8);
    const auto f = random_forcing(3, rng);
    const Var x = Var::constant(random_tensor({3}, rng));
    double previous = INFINITY;
    for (double dl : {1e-1, 1e-3, 1e-6, 1e-9}) {
        const double dev = max_abs_diff(c1_step(f, x, dl).value(), x.value());
        EXPECT_LT(dev, previous);
        previous = dev;
    }
    EXPECT_LT(previous, 1e-8);
}

TEST(C1Step, EqualsFirstOrderDirectStep) {
    Rng rng(9);
    const auto f = random_forcing(3, rng);
    const Var x = Var::constant(random_tensor({3}, rng));
    EXPECT_EQ(c1_step(f, x, 0.3).value(), ck_direct_step(f, LayerHistory::ghost(x, 1), 1, 0.3).value());
}

TEST(CkDirectStep, FreeMotionExtrapolatesLinearly) {
    LayerHistory h(2);
    h.push(scalar_state(0.0));
    h.push(scalar_state(1.0));
    EXPECT_EQ(ck_direct_step(zero_forcing(1), h, 2, 1.0).value(), Tensor::vector({2.0}));
}

TEST(CkDirectStep, HandExpansionSecondOrder) {
    const auto h = LayerHistory::ghost(scalar_state(1.0), 2);
    EXPECT_DOUBLE_EQ(ck_direct_step(half_forcing(), h, 2, 1.0).value().item(), 1.5);
}

TEST(CkDirectStep, ShortHistoryIsContractError) {
    LayerHistory h(3);
    h.push(scalar_state(1.0));
    EXPECT_THROW(ck_direct_step(zero_forcing(1), h, 3, 1.0), ContractError);
}

TEST(CkStateStep, HandEvaluationSecondOrder) {
    const StateVector q{{scalar_state(1.0), scalar_state(0.0)}};
    const auto next = ck_state_step(half_forcing(), q, 2, 1.0);
    ASSERT_EQ(next.order(), 2);
    EXPECT_DOUBLE_EQ(next.parts[0].value().item(), 1.5);
    EXPECT_DOUBLE_EQ(next.parts[1].value().item(), 0.5);
}

TEST(CkStateStep, ZeroForcingDrifts) {
    const StateVector q{{scalar_state(1.0), scalar_state(2.0), scalar_state(3.0)}};
    const auto next = ck_state_step(zero_forcing(1), q, 3, 0.5);
    EXPECT_EQ(next.parts[0].value().item(), 6.0);
    EXPECT_EQ(next.parts[1].value().item(), 5.0);
    EXPECT_EQ(next.parts[2].value().item(), 3.0);
}

TEST(CkStateStep, MatchesExpandedTransitionMatrix) {
    Rng rng(12);
    const std::size_t d = 3;
    const int k = 4;
    const double dl = 0.6;
    const auto f = random_forcing(d, rng);
    StateVector q;
    for (int i = 0; i < k; ++i) q.parts.push_back(Var::constant(random_tensor({d}, rng)));
    const auto next = ck_state_step(f, q, k, dl);

    const Tensor a = dynamics::build_ck_matrices(k, d).transition.expand();
    Tensor stacked(Shape{k * d});
    for (int i = 0; i < k; ++i)
        for (std::size_t j = 0; j < d; ++j) stacked[i * d + j] = q.parts[static_cast<std::size_t>(i)].value()[j];
    const Tensor forced = f(q.parts[0]).value();
    for (std::size_t r = 0; r < k * d; ++r) {
        double acc = forced[r % d] * std::pow(dl, k);
        for (std::size_t c = 0; c < k * d; ++c) acc += a.at(r, c) * stacked[c];
        EXPECT_NEAR(next.parts[r / d].value()[r % d], acc, 1e-12);
    }
}

TEST(CkStateStep, PartCountMismatchIsContractError) {
    const StateVector q{{scalar_state(1.0)}};
    EXPECT_THROW(ck_state_step(zero_forcing(1), q, 2, 1.0), ContractError);
}

TEST(CkSteps, FourthOrderDirectMatchesStateSpace) {
    Rng rng(21);
    const std::size_t d = 2;
    const int k = 4;
    const double dl = 0.5;
    const Var x0 = Var::constant(random_tensor({d}, rng));
    auto history = LayerHistory::ghost(x0, k);
    auto q = initialize_state(x0, k);
    for (int l = 0; l < 12; ++l) {
        const auto f = random_forcing(d, rng);
        history.push(ck_direct_step(f, history, k, dl));
        q = ck_state_step(f, q, k, dl);
        const auto from_history = states_from_history(history);
        for (int n = 0; n < k; ++n)
            EXPECT_LT(max_abs_diff(from_history.parts[static_cast<std::size_t>(n)].value(),
                                   q.parts[static_cast<std::size_t>(n)].value()),
                      1e-9);
    }
}

TEST(InitializeState, ZeroHigherDifferences) {
    const Var x0 = Var::constant(Tensor::vector({2, -1}));
    const auto q1 = initialize_state(x0, 1);
    ASSERT_EQ(q1.order(), 1);
    EXPECT_EQ(q1.parts[0].value(), x0.value());
    const auto q2 = initialize_state(x0, 2);
    EXPECT_EQ(q2.parts[0].value(), x0.value());
    EXPECT_EQ(q2.parts[1].value(), Tensor::zeros({2}));
}

TEST(InitializeState, MatchesGhostHistory) {
    const Var x0 = Var::constant(Tensor::vector({0.5, 4.0, -3.0}));
    for (int k = 1; k <= 5; ++k) {
        const auto a = initialize_state(x0, k).values();
        const auto b = states_from_history(LayerHistory::ghost(x0, k)).values();
        for (int n = 0; n < k; ++n) EXPECT_EQ(a[static_cast<std::size_t>(n)], b[static_cast<std::size_t>(n)]);
    }
}

TEST(DenseDirectStep, FirstOrderIsResidualStep) {
    Rng rng(31);
    const auto f = random_forcing(3, rng);
    const Var x = Var::constant(random_tensor({3}, rng));
    const ForcingFunction* fs[] = {&f};
    EXPECT_EQ(dense_direct_step(fs, LayerHistory::ghost(x, 1), 0.3).value(), c1_step(f, x, 0.3).value());
}

TEST(DenseDirectStep, ZeroForcingCopiesOldestLag) {
    const auto f = zero_forcing(1);
    LayerHistory h(3);
    for (double v : {7.0, 8.0, 9.0}) h.push(scalar_state(v));
    const ForcingFunction* fs[] = {&f, &f, &f};
    EXPECT_EQ(dense_direct_step(fs, h, 1.0).value().item(), 7.0);
}

TEST(DenseDirectStep, ForcingCountMismatchIsContractError) {
    const auto f = zero_forcing(1);
    const auto h = LayerHistory::ghost(scalar_state(1.0), 2);
    const ForcingFunction* fs[] = {&f, &f, &f};
    EXPECT_THROW(dense_direct_step(fs, h, 1.0), ContractError);
}

TEST(DenseStateStep, FirstOrderIsResidualStep) {
    Rng rng(32);
    const auto f = random_forcing(2, rng);
    const Var x = Var::constant(random_tensor({2}, rng));
    const ForcingFunction* fs[] = {&f};
    const auto q = dense_state_step(fs, initialize_state(x, 1), 0.8);
    EXPECT_EQ(q.parts[0].value(), c1_step(f, x, 0.8).value());
}

TEST(DenseStateStep, SecondStateReceivesForcingDifference) {
    Rng rng(33);
    const auto f0 = random_forcing(2, rng);
    const auto f1 = random_forcing(2, rng);
    const Var x_prev = Var::constant(random_tensor({2}, rng));
    const Var x_cur = Var::constant(random_tensor({2}, rng));
    const StateVector q{{x_cur, sub(x_cur, x_prev)}};
    const ForcingFunction* fs[] = {&f1, &f0};
    const double dl = 0.7;
    const auto next = dense_state_step(fs, q, dl);
    const Tensor g_cur = f1(x_cur).value();
    const Tensor g_prev = f0(x_prev).value();
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_NEAR(next.parts[0].value()[i], x_cur.value()[i] + g_cur[i] * dl, 1e-14);
        EXPECT_NEAR(next.parts[1].value()[i], q.parts[1].value()[i] + (g_cur[i] - g_prev[i]) * dl, 1e-14);
    }
}

TEST(DenseSteps, ThirdOrderDirectMatchesStateSpace) {
    Rng rng(34);
    const std::size_t d = 3;
    const int k = 3;
    const double dl = 0.45;
    const Var x0 = Var::constant(random_tensor({d}, rng));
    std::vector<ForcingFunction> blocks;
    for (int l = 0; l < 9; ++l) blocks.push_back(random_forcing(d, rng));
    auto history = LayerHistory::ghost(x0, k);
    auto q = initialize_state(x0, k);
    for (int l = 0; l < 9; ++l) {
        std::vector<const ForcingFunction*> fs;
        for (int j = 0; j < k && l - j >= 0; ++j) fs.push_back(&blocks[static_cast<std::size_t>(l - j)]);
        history.push(dense_direct_step(fs, history, dl));
        q = dense_state_step(fs, q, dl);
        const auto expected = states_from_history(history);
        for (int n = 0; n < k; ++n)
            EXPECT_LT(max_abs_diff(expected.parts[static_cast<std::size_t>(n)].value(),
                                   q.parts[static_cast<std::size_t>(n)].value()),
                      1e-9);
    }
}

TEST(DenseIdentity, HoldsForDenseNetworks) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Network net(config(Family::dense, 2, 6, 3, seed));
        Rng rng(seed + 100);
        randomize_biases(net, rng);
        const auto t = net.forward(random_tensor({2, 5}, rng), Mode::direct, true).trajectory;
        for (int n = 0; n < 2; ++n) {
            const auto r = dense_difference_identity_check(t.sample_positions(1), t.sample_forcing(1), n, 0.4);
            EXPECT_TRUE(r.holds) << "seed " << seed << " n " << n << " dev " << r.max_deviation;
        }
    }
}

TEST(DenseIdentity, ResidualIdentityAtOrderZero) {
    Network net(config(Family::c1, 1, 5));
    Rng rng(5);
    randomize_biases(net, rng);
    const auto t = net.forward(random_tensor({1, 5}, rng), Mode::direct, true).trajectory;
    EXPECT_TRUE(dense_difference_identity_check(t.sample_positions(0), t.sample_forcing(0), 0, 0.4));
}

TEST(DenseIdentity, FailsForHigherOrderCkNetworks) {
    Network net(config(Family::ck, 2, 6));
    Rng rng(6);
    randomize_biases(net, rng);
    const auto t = net.forward(random_tensor({1, 5}, rng), Mode::direct, true).trajectory;
    EXPECT_FALSE(dense_difference_identity_check(t.sample_positions(0), t.sample_forcing(0), 1, 0.4));
}

TEST(DenseIdentity, ShortTrajectoryIsBoundsError) {
    Network net(config(Family::dense, 3, 1));
    Rng rng(7);
    const auto t = net.forward(random_tensor({1, 5}, rng), Mode::direct, true).trajectory;
    EXPECT_THROW(dense_difference_identity_check(t.sample_positions(0), t.sample_forcing(0), 2, 0.4), BoundsError);
}

TEST(ParameterCount, SecondOrderWidthThree) {
    EXPECT_EQ(ck_parameter_count(2, 3, 1).weights, 9u);
    EXPECT_EQ(first_order_equivalent_parameter_count(2, 3, 1).weights, 36u);
    EXPECT_EQ(weight_ratio(2, 3, 1), (Ratio{1, 4}));
}

TEST(ParameterCount, FirstOrderRatioIsOne) { EXPECT_EQ(weight_ratio(1, 17, 3), (Ratio{1, 1})); }

TEST(ParameterCount, FourthOrderWidthSixtyFour) {
    EXPECT_EQ(ck_parameter_count(4, 64, 1).weights, 4096u);
    EXPECT_EQ(first_order_equivalent_parameter_count(4, 64, 1).weights, 65536u);
    EXPECT_EQ(weight_ratio(4, 64, 1), (Ratio{1, 16}));
    EXPECT_EQ(ck_parameter_count(4, 64, 3).total(), 3u * (4096 + 64));
}

TEST(Network, ZeroDepthIsEmbeddingPlusHead) {
    Network net(config(Family::ck, 2, 0));
    EXPECT_EQ(net.parameters().size(), 4u);
    Rng rng(1);
    const Tensor x = random_tensor({3, 5}, rng);
    const auto out = net.forward(x, Mode::direct, true);
    EXPECT_EQ(out.logits.shape(), (Shape{3, 4}));
    EXPECT_EQ(out.trajectory.layers(), 1u);
    EXPECT_EQ(out.logits.value(), net.forward(x, Mode::state_space).logits.value());
}

TEST(Network, RejectsBadConfig) {
    auto cfg = config(Family::ck, 0, 2);
    EXPECT_THROW(Network{cfg}, ContractError);
    cfg = config(Family::ck, 2, 2);
    cfg.dl = 0.0;
    EXPECT_THROW(Network{cfg}, ContractError);
    Network net(config(Family::ck, 2, 2));
    EXPECT_THROW(net.forward(Tensor::zeros({2, 4}), Mode::direct), DimensionError);
}

TEST(Network, DirectAndStateLogitsAgree) {
    Rng rng(77);
    for (Family family : {Family::c0, Family::c1, Family::ck, Family::dense})
        for (int k = 1; k <= 4; ++k)
            for (Readout readout : {Readout::position, Readout::full_state}) {
                auto cfg = config(family, k, 7, 3, static_cast<std::uint64_t>(k));
                cfg.readout = readout;
                Network net(cfg);
                randomize_biases(net, rng);
                const Tensor x = random_tensor({4, 5}, rng);
                EXPECT_LE(max_abs_diff(net.logits(x, Mode::direct).value(), net.logits(x, Mode::state_space).value()),
                          1e-9)
                    << to_string(family) << " k=" << k;
            }
}

TEST(Network, BatchEqualsIndependentSamples) {
    Rng rng(78);
    for (Family family : {Family::c1, Family::ck, Family::dense})
        for (Mode mode : {Mode::direct, Mode::state_space}) {
            Network net(config(family, 3, 5));
            randomize_biases(net, rng);
            const Tensor x = random_tensor({6, 5}, rng);
            const Tensor batch = net.logits(x, mode).value();
            for (std::size_t b = 0; b < 6; ++b) {
                const auto r = x.row(b);
                const Tensor single(Shape{1, 5}, std::vector<double>(r.begin(), r.end()));
                const Tensor out = net.logits(single, mode).value();
                for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(out.at(0, c), batch.at(b, c));
            }
        }
}

TEST(Network, ResidualCollapseIsBitwise) {
    Rng rng(79);
    const Tensor x = random_tensor({3, 5}, rng);
    Network c1(config(Family::c1, 1, 6, 4, 9));
    Network ck(config(Family::ck, 1, 6, 4, 9));
    Network dense(config(Family::dense, 1, 6, 4, 9));
    const Tensor ref = c1.logits(x).value();
    EXPECT_EQ(ck.logits(x, Mode::direct).value(), ref);
    EXPECT_EQ(ck.logits(x, Mode::state_space).value(), ref);
    EXPECT_EQ(dense.logits(x, Mode::direct).value(), ref);
    EXPECT_EQ(dense.logits(x, Mode::state_space).value(), ref);
}

TEST(Network, SameSeedSameParameters) {
    Network a(config(Family::dense, 3, 4, 3, 5));
    Network b(config(Family::dense, 3, 4, 3, 5));
    Network c(config(Family::dense, 3, 4, 3, 6));
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    bool differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa[i].var.value(), pb[i].var.value());
        differs = differs || !(pa[i].var.value() == pc[i].var.value());
    }
    EXPECT_TRUE(differs);
}

TEST(Network, CloneIsIndependent) {
    Network a(config(Family::ck, 2, 3));
    Network b = a.clone();
    a.parameters()[2].var.assign(Tensor::zeros({3, 3}));
    EXPECT_FALSE(b.parameters()[2].var.value() == Tensor::zeros({3, 3}));
}

TEST(StateVector, EmbeddingDimension) {
    EXPECT_EQ(initialize_state(Var::constant(Tensor::zeros({2, 7})), 3).embedding_dim(), 21u);
}
