#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ckdyn/tensor.hpp"

namespace ckdyn {

struct Dataset {
    Tensor inputs;            // [N×input_dim]
    std::vector<int> labels;  // N entries in [0, num_classes)
    std::size_t num_classes = 0;

    Dataset() = default;
    Dataset(Tensor inputs, std::vector<int> labels, std::size_t num_classes);

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t input_dim() const { return inputs.cols(); }

    /// Rows at `indices`, in that order.
    Dataset select(std::span<const std::size_t> indices) const;
    Dataset head(std::size_t n) const;
};

inline constexpr int kToyBlue = 0;
inline constexpr int kToyRed = 1;

/// Blue uniform on [-3,-1), red uniform on [-1,1) (2·n points), blue uniform on [1,3).
Dataset generate_toy_1d(std::size_t n_per_segment, std::uint64_t seed);

/// Best accuracy of any single-threshold rule (either polarity) on 1-D inputs,
/// by exhaustive sweep over cut points between sorted values.
double best_threshold_accuracy(std::span<const double> values, std::span<const int> labels);

/// Seeded shuffle split: the first side receives round(fraction·N) rows.
std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed);

namespace idx {

inline constexpr std::uint32_t kLabelMagic = 0x00000801;
inline constexpr std::uint32_t kImageMagic = 0x00000803;

struct Images {
    std::uint32_t count = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint8_t> pixels;
};

/// Reads a file, inflating it when the name ends in ".gz".
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Images parse_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_images(const Images& images);
std::vector<std::uint8_t> encode_labels(std::span<const std::uint8_t> labels);

}  // namespace idx

/// N×(rows·cols) inputs scaled to [0, 1], labels 0–9.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes a dataset with 28×28 inputs in [0,1] back to IDX (pixels rounded to bytes).
void write_mnist_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels,
                     std::uint32_t rows = 28, std::uint32_t cols = 28);

struct MnistFiles {
    std::filesystem::path train_images;
    std::filesystem::path train_labels;
};

/// Locates train-images-idx3-ubyte[.gz] and train-labels-idx1-ubyte[.gz] under
/// `dir`. Throws IoError naming the expected paths when absent.
MnistFiles locate_mnist(const std::filesystem::path& dir);

}  // namespace ckdyn
