#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "ckdyn/data.hpp"
#include "ckdyn/errors.hpp"

using namespace ckdyn;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("ckdyn_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::vector<std::uint8_t> one_image_file() {
    // magic, count 1, 2×2 image with pixels 0, 51, 204, 255
    return {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 51, 204, 255};
}

std::vector<std::uint8_t> one_label_file(std::uint8_t label) { return {0, 0, 8, 1, 0, 0, 0, 1, label}; }

ParseError::Kind parse_kind(auto&& fn) {
    try {
        fn();
    } catch (const ParseError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected ParseError";
    return ParseError::Kind::malformed;
}

}  // namespace

TEST(Toy, SingleSamplePerSegment) {
    const Dataset d = generate_toy_1d(1, 5);
    ASSERT_EQ(d.size(), 4u);
    EXPECT_EQ(d.labels, (std::vector<int>{kToyBlue, kToyRed, kToyRed, kToyBlue}));
    EXPECT_LT(d.inputs[0], -1.0);
    EXPECT_GE(d.inputs[1], -1.0);
    EXPECT_LT(d.inputs[2], 1.0);
    EXPECT_GE(d.inputs[3], 1.0);
}

TEST(Toy, DisjointSupportsAndBalancedClasses) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Dataset d = generate_toy_1d(25, seed);
        double left_max = -INFINITY, right_min = INFINITY, red_min = INFINITY, red_max = -INFINITY;
        std::size_t red = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double x = d.inputs[i];
            if (d.labels[i] == kToyRed) {
                ++red;
                red_min = std::min(red_min, x);
                red_max = std::max(red_max, x);
            } else if (x < 0) {
                left_max = std::max(left_max, x);
            } else {
                right_min = std::min(right_min, x);
            }
        }
        EXPECT_EQ(red * 2, d.size());
        EXPECT_GT(red_min, left_max);
        EXPECT_LT(red_max, right_min);
        EXPECT_GE(left_max, -3.0);
        EXPECT_LT(right_min, 3.0);
    }
}

TEST(Toy, BestThresholdOnRawDataIsThreeQuarters) {
    for (std::uint64_t seed = 0; seed < 10; ++seed)
        for (std::size_t n : {1u, 10u, 50u}) {
            const Dataset d = generate_toy_1d(n, seed);
            EXPECT_EQ(best_threshold_accuracy(d.inputs.data(), d.labels), 0.75) << seed << " " << n;
        }
}

TEST(Toy, ThresholdSweepHandlesBothPolarities) {
    const std::vector<double> x{1, 2, 3, 4};
    EXPECT_EQ(best_threshold_accuracy(x, std::vector<int>{0, 0, 1, 1}), 1.0);
    EXPECT_EQ(best_threshold_accuracy(x, std::vector<int>{1, 1, 0, 0}), 1.0);
    EXPECT_EQ(best_threshold_accuracy(std::vector<double>{1, 1}, std::vector<int>{0, 1}), 0.5);
}

TEST(Idx, SingleImageFixture) {
    TempDir dir;
    idx::write_file(dir.path() / "img", one_image_file());
    idx::write_file(dir.path() / "lab", one_label_file(7));
    const Dataset d = load_mnist_idx(dir.path() / "img", dir.path() / "lab");
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d.input_dim(), 4u);
    EXPECT_EQ(d.labels[0], 7);
    EXPECT_EQ(d.inputs.at(0, 0), 0.0);
    EXPECT_EQ(d.inputs.at(0, 1), 51.0 / 255.0);
    EXPECT_EQ(d.inputs.at(0, 2), 204.0 / 255.0);
    EXPECT_EQ(d.inputs.at(0, 3), 1.0);
}

TEST(Idx, GzipRoundTrip) {
    TempDir dir;
    idx::Images img{3, 28, 28, {}};
    for (std::size_t i = 0; i < 3 * 28 * 28; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 37 % 256));
    const std::vector<std::uint8_t> labels{4, 0, 9};
    idx::write_file(dir.path() / "i.gz", idx::encode_images(img));
    idx::write_file(dir.path() / "l.gz", idx::encode_labels(labels));
    const Dataset d = load_mnist_idx(dir.path() / "i.gz", dir.path() / "l.gz");
    ASSERT_EQ(d.size(), 3u);
    EXPECT_EQ(d.labels, (std::vector<int>{4, 0, 9}));

    write_mnist_idx(d, dir.path() / "j", dir.path() / "m");
    const Dataset again = load_mnist_idx(dir.path() / "j", dir.path() / "m");
    EXPECT_EQ(again.inputs, d.inputs);
    EXPECT_EQ(again.labels, d.labels);
    EXPECT_EQ(idx::parse_images(idx::read_file(dir.path() / "j")).pixels, img.pixels);
}

TEST(Idx, LabelsWithImageMagicIsMagicError) {
    EXPECT_EQ(parse_kind([] {
                  const std::vector<std::uint8_t> b{0, 0, 8, 3, 0, 0, 0, 1, 5};
                  idx::parse_labels(b);
              }),
              ParseError::Kind::bad_magic);
}

TEST(Idx, TruncatedPayloadIsTruncationError) {
    auto bytes = one_image_file();
    bytes.pop_back();
    EXPECT_EQ(parse_kind([&] { idx::parse_images(bytes); }), ParseError::Kind::truncated);
    EXPECT_EQ(parse_kind([] { idx::parse_labels(std::vector<std::uint8_t>{0, 0, 8}); }), ParseError::Kind::truncated);
}

TEST(Idx, CountMismatchBetweenFiles) {
    TempDir dir;
    idx::write_file(dir.path() / "img", one_image_file());
    idx::write_file(dir.path() / "lab", idx::encode_labels(std::vector<std::uint8_t>{1, 2}));
    EXPECT_EQ(parse_kind([&] { load_mnist_idx(dir.path() / "img", dir.path() / "lab"); }),
              ParseError::Kind::count_mismatch);
}

TEST(Idx, MissingFileIsIoError) {
    TempDir dir;
    EXPECT_THROW(load_mnist_idx(dir.path() / "nope", dir.path() / "nada"), IoError);
    try {
        locate_mnist(dir.path());
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("train-images-idx3-ubyte"), std::string::npos);
        EXPECT_NE(what.find("fetch_mnist"), std::string::npos);
    }
}

TEST(Split, HalvesTenItems) {
    const Dataset d = generate_toy_1d(3, 1).head(10);
    const auto [a, b] = split(d, 0.5, 3);
    EXPECT_EQ(a.size(), 5u);
    EXPECT_EQ(b.size(), 5u);
}

TEST(Split, UnionIsOriginalMultiset) {
    const Dataset d = generate_toy_1d(10, 2);
    const auto [a, b] = split(d, 0.3, 4);
    std::vector<double> all(d.inputs.data().begin(), d.inputs.data().end());
    std::vector<double> parts(a.inputs.data().begin(), a.inputs.data().end());
    parts.insert(parts.end(), b.inputs.data().begin(), b.inputs.data().end());
    std::sort(all.begin(), all.end());
    std::sort(parts.begin(), parts.end());
    EXPECT_EQ(all, parts);
}

TEST(Split, SameSeedSameSplit) {
    const Dataset d = generate_toy_1d(10, 2);
    const auto [a1, b1] = split(d, 0.6, 9);
    const auto [a2, b2] = split(d, 0.6, 9);
    EXPECT_EQ(a1.inputs, a2.inputs);
    EXPECT_EQ(b1.labels, b2.labels);
}

TEST(Split, DegenerateSplitIsContractError) {
    const Dataset d = generate_toy_1d(1, 0);
    EXPECT_THROW(split(d, 0.05, 0), ContractError);
    EXPECT_THROW(split(d, 1.0, 0), ContractError);
}

TEST(MnistSubset, HeaderShapeIfPresent) {
    const fs::path dir = CK_DATA_DIR;
    MnistFiles files;
    try {
        files = locate_mnist(dir);
    } catch (const IoError&) {
        GTEST_SKIP() << "MNIST not present under " << dir;
    }
    const auto img = idx::parse_images(idx::read_file(files.train_images));
    EXPECT_EQ(img.rows, 28u);
    EXPECT_EQ(img.cols, 28u);
    EXPECT_GE(img.count, 10000u);
}
