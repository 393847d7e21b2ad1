#include "ckdyn/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ckdyn/errors.hpp"
#include "ckdyn/rng.hpp"

namespace ckdyn {

Dataset::Dataset(Tensor inputs_, std::vector<int> labels_, std::size_t num_classes_)
    : inputs(std::move(inputs_)), labels(std::move(labels_)), num_classes(num_classes_) {
    if (labels.empty()) throw ContractError("Dataset: no samples");
    if (inputs.rank() != 2 || inputs.rows() != labels.size())
        throw DimensionError("Dataset: inputs " + shape_string(inputs.shape()) + " for " +
                             std::to_string(labels.size()) + " labels");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw ContractError("Dataset: label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) +
                                ")");
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
    const std::size_t c = input_dim();
    Tensor x(Shape{indices.size(), c});
    std::vector<int> y(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = inputs.row(indices[i]);
        std::copy(src.begin(), src.end(), x.row(i).begin());
        y[i] = labels[indices[i]];
    }
    return Dataset(std::move(x), std::move(y), num_classes);
}

Dataset Dataset::head(std::size_t n) const {
    std::vector<std::size_t> idx(std::min(n, size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return select(idx);
}

Dataset generate_toy_1d(std::size_t n_per_segment, std::uint64_t seed) {
    if (n_per_segment < 1) throw ContractError("generate_toy_1d: n_per_segment must be >= 1");
    Rng rng(seed);
    const std::size_t n = n_per_segment;
    std::vector<double> x;
    std::vector<int> y;
    x.reserve(4 * n);
    y.reserve(4 * n);
    for (std::size_t i = 0; i < n; ++i) {
        x.push_back(rng.uniform(-3.0, -1.0));
        y.push_back(kToyBlue);
    }
    for (std::size_t i = 0; i < 2 * n; ++i) {
        x.push_back(rng.uniform(-1.0, 1.0));
        y.push_back(kToyRed);
    }
    for (std::size_t i = 0; i < n; ++i) {
        x.push_back(rng.uniform(1.0, 3.0));
        y.push_back(kToyBlue);
    }
    const std::size_t total = x.size();
    return Dataset(Tensor(Shape{total, 1}, std::move(x)), std::move(y), 2);
}

double best_threshold_accuracy(std::span<const double> values, std::span<const int> labels) {
    if (values.size() != labels.size() || values.empty())
        throw ContractError("best_threshold_accuracy: need equally many (non-zero) values and labels");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    const std::size_t n = values.size();
    std::size_t total_pos = 0;
    for (int y : labels) total_pos += y == 1;
    // Rule "label 1 above the cut": correct = (negatives below) + (positives above).
    std::size_t neg_below = 0, pos_below = 0, best = 0;
    for (std::size_t cut = 0; cut <= n; ++cut) {
        const bool valid = cut == 0 || cut == n || values[order[cut - 1]] < values[order[cut]];
        if (valid) {
            const std::size_t up = neg_below + (total_pos - pos_below);
            const std::size_t down = n - up;
            best = std::max({best, up, down});
        }
        if (cut < n) (labels[order[cut]] == 1 ? pos_below : neg_below)++;
    }
    return static_cast<double>(best) / static_cast<double>(n);
}

std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ContractError("split: fraction must lie strictly in (0, 1)");
    const auto first = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
    if (first == 0 || first >= data.size())
        throw ContractError("split: fraction " + std::to_string(fraction) + " of " + std::to_string(data.size()) +
                            " samples leaves one side empty");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    const std::span<const std::size_t> all(order);
    return {data.select(all.first(first)), data.select(all.subspan(first))};
}

namespace idx {

namespace {

bool has_gz_suffix(const std::filesystem::path& p) { return p.extension() == ".gz"; }

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("cannot open '" + path.string() + "': no such file");
    std::vector<std::uint8_t> out;
    if (has_gz_suffix(path)) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (!f) throw IoError("cannot open '" + path.string() + "'");
        std::uint8_t buf[1 << 16];
        int n;
        while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
        const bool failed = n < 0;
        gzclose(f);
        if (failed) throw IoError("gzip decode failed for '" + path.string() + "'");
        return out;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (has_gz_suffix(path)) {
        gzFile f = gzopen(path.c_str(), "wb9");
        if (!f) throw IoError("cannot write '" + path.string() + "'");
        const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
        gzclose(f);
        if (n != static_cast<int>(bytes.size())) throw IoError("gzip write failed for '" + path.string() + "'");
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Images parse_images(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 16) throw ParseError(ParseError::Kind::truncated, "IDX images: header shorter than 16 bytes");
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != kImageMagic)
        throw ParseError(ParseError::Kind::bad_magic,
                         "IDX images: bad magic number " + hex(magic) + " (expected " + hex(kImageMagic) + ")");
    Images img;
    img.count = read_be32(bytes, 4);
    img.rows = read_be32(bytes, 8);
    img.cols = read_be32(bytes, 12);
    const std::uint64_t need = std::uint64_t{img.count} * img.rows * img.cols;
    if (bytes.size() - 16 < need)
        throw ParseError(ParseError::Kind::truncated, "IDX images: payload has " + std::to_string(bytes.size() - 16) +
                                                          " bytes, header promises " + std::to_string(need));
    img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(need));
    return img;
}

std::vector<std::uint8_t> parse_labels(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw ParseError(ParseError::Kind::truncated, "IDX labels: header shorter than 8 bytes");
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != kLabelMagic)
        throw ParseError(ParseError::Kind::bad_magic,
                         "IDX labels: bad magic number " + hex(magic) + " (expected " + hex(kLabelMagic) + ")");
    const std::uint32_t count = read_be32(bytes, 4);
    if (bytes.size() - 8 < count)
        throw ParseError(ParseError::Kind::truncated, "IDX labels: payload has " + std::to_string(bytes.size() - 8) +
                                                          " bytes, header promises " + std::to_string(count));
    return {bytes.begin() + 8, bytes.begin() + 8 + count};
}

std::vector<std::uint8_t> encode_images(const Images& images) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + images.pixels.size());
    write_be32(out, kImageMagic);
    write_be32(out, images.count);
    write_be32(out, images.rows);
    write_be32(out, images.cols);
    out.insert(out.end(), images.pixels.begin(), images.pixels.end());
    return out;
}

std::vector<std::uint8_t> encode_labels(std::span<const std::uint8_t> labels) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + labels.size());
    write_be32(out, kLabelMagic);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

}  // namespace idx

Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto img = idx::parse_images(idx::read_file(images));
    const auto lab = idx::parse_labels(idx::read_file(labels));
    if (img.count != lab.size())
        throw ParseError(ParseError::Kind::count_mismatch, "IDX: " + std::to_string(img.count) + " images but " +
                                                               std::to_string(lab.size()) + " labels");
    if (img.count == 0) throw ParseError(ParseError::Kind::malformed, "IDX: zero samples");
    const std::size_t dim = std::size_t{img.rows} * img.cols;
    std::vector<double> x(img.pixels.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(img.pixels[i]) / 255.0;
    std::vector<int> y(lab.begin(), lab.end());
    for (int v : y)
        if (v > 9) throw ParseError(ParseError::Kind::malformed, "IDX: label " + std::to_string(v) + " outside 0-9");
    return Dataset(Tensor(Shape{img.count, dim}, std::move(x)), std::move(y), 10);
}

void write_mnist_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels,
                     std::uint32_t rows, std::uint32_t cols) {
    if (data.input_dim() != std::size_t{rows} * cols)
        throw DimensionError("write_mnist_idx: input_dim " + std::to_string(data.input_dim()) + " is not " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    idx::Images img;
    img.count = static_cast<std::uint32_t>(data.size());
    img.rows = rows;
    img.cols = cols;
    img.pixels.reserve(data.inputs.size());
    for (double v : data.inputs.data())
        img.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    std::vector<std::uint8_t> lab;
    lab.reserve(data.size());
    for (int y : data.labels) lab.push_back(static_cast<std::uint8_t>(y));
    idx::write_file(images, idx::encode_images(img));
    idx::write_file(labels, idx::encode_labels(lab));
}

MnistFiles locate_mnist(const std::filesystem::path& dir) {
    auto find = [&](const std::string& stem) -> std::filesystem::path {
        for (const auto& candidate : {dir / stem, dir / (stem + ".gz")})
            if (std::filesystem::exists(candidate)) return candidate;
        throw IoError("MNIST file not found: expected '" + (dir / stem).string() + "' or '" +
                      (dir / (stem + ".gz")).string() +
                      "'. Run tools/fetch_mnist.py --out " + dir.string() +
                      " or point --data-dir / CK_DATA_DIR at a directory holding the IDX files.");
    };
    return {find("train-images-idx3-ubyte"), find("train-labels-idx1-ubyte")};
}

}  // namespace ckdyn
