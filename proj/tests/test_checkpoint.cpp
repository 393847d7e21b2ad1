#include <gtest/gtest.h>

#include <sstream>

#include "ckdyn/checkpoint.hpp"
#include "ckdyn/errors.hpp"

using namespace ckdyn;

namespace {

CkNetworkConfig sample_config() {
    CkNetworkConfig cfg;
    cfg.family = Family::dense;
    cfg.order = 3;
    cfg.depth = 4;
    cfg.width = 5;
    cfg.input_dim = 7;
    cfg.num_classes = 3;
    cfg.dl = 0.25;
    cfg.activation = Activation::leaky_relu;
    cfg.readout = Readout::full_state;
    cfg.seed = 41;
    return cfg;
}

ParseError::Kind load_kind(const std::string& bytes) {
    std::istringstream in(bytes);
    try {
        load_checkpoint(in);
    } catch (const ParseError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected ParseError";
    return ParseError::Kind::malformed;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
    const Network net(sample_config());
    std::ostringstream out;
    save_checkpoint(net, out);
    std::istringstream in(out.str());
    const Network back = load_checkpoint(in);

    EXPECT_EQ(back.config().family, Family::dense);
    EXPECT_EQ(back.config().order, 3);
    EXPECT_EQ(back.config().dl, 0.25);
    EXPECT_EQ(back.config().readout, Readout::full_state);
    EXPECT_EQ(back.config().activation, Activation::leaky_relu);
    const auto a = net.parameters(), b = back.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].name, b[i].name);
        EXPECT_EQ(a[i].var.value(), b[i].var.value());
    }
    const Tensor x = Tensor::ones({2, 7});
    EXPECT_EQ(net.logits(x).value(), back.logits(x).value());
}

TEST(Checkpoint, Errors) {
    const Network net(sample_config());
    std::ostringstream out;
    save_checkpoint(net, out);
    const std::string good = out.str();

    EXPECT_EQ(load_kind("not json\n"), ParseError::Kind::malformed);
    EXPECT_EQ(load_kind("{\"format\":\"other\",\"version\":1}\n"), ParseError::Kind::bad_magic);
    EXPECT_EQ(load_kind(good.substr(0, good.size() - 3)), ParseError::Kind::truncated);
    EXPECT_THROW(load_checkpoint(std::filesystem::path("/nonexistent/ckpt.bin")), IoError);
}
