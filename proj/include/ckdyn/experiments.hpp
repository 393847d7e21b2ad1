#pragma once

// Measurable studies: perturbation size versus depth, the 1-D separability
// toy, and a side-by-side comparison of network orders.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ckdyn/architectures.hpp"
#include "ckdyn/data.hpp"

namespace ckdyn::experiments {

struct PerturbationRecord {
    int layer = 0;
    double ratio = 0.0;  // mean over samples of ‖f·Δl‖ / ‖x‖
};

struct PerturbationReport {
    std::vector<PerturbationRecord> layers;
    double mean = 0.0;          // average of the per-layer ratios
    std::size_t excluded = 0;   // (sample, layer) pairs dropped for a zero-norm activation
};

/// `trajectory` must carry positions and raw forcing values.
PerturbationReport measure_perturbation(const Trajectory& trajectory, double dl);
/// Runs `batch` through a first-order residual network and measures every block.
PerturbationReport measure_perturbation(const Network& net, const Tensor& batch);

struct RegressionFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double d_estimate = 0.0;  // 1 / slope
};

/// Ordinary least squares of 1/ρ̄ against depth over (depth, ρ̄) pairs.
RegressionFit fit_computational_distance(std::span<const std::pair<int, double>> points);

/// Spearman rank correlation; ties receive their average rank.
double spearman(std::span<const double> a, std::span<const double> b);

struct TrajectoryDump {
    // points[layer][sample] = (q1, q2); q2 is 0 for first-order networks.
    std::vector<std::vector<std::array<double, 2>>> points;
    std::vector<int> labels;
};

struct ToyConfig {
    int order = 2;
    int depth = 16;
    std::size_t samples_per_segment = 10;
    int epochs = 2000;
    double learning_rate = 0.01;
    Activation activation = Activation::tanh;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

struct ToyRun {
    std::uint64_t seed = 0;
    double accuracy = 0.0;
};

struct ToyResult {
    int order = 0;
    std::vector<ToyRun> runs;
    std::size_t best = 0;  // index into runs: highest accuracy, earliest seed on ties
    TrajectoryDump trajectory;  // of the best run

    double best_accuracy() const { return runs.at(best).accuracy; }
    double worst_accuracy() const;
};

/// Trains a width-1 network with mesh Δl = 1/depth on the toy set, once per
/// seed. Each seed drives both the data draw and the initialization.
ToyResult run_toy_experiment(const ToyConfig& config, int jobs = 1);

struct SweepConfig {
    std::vector<int> depths{2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
    std::size_t width = 64;
    double dl = 1.0;
    int epochs = 30;
    std::size_t batch_size = 64;
    double learning_rate = 3e-3;
    int repetitions = 1;
    std::size_t probe_size = 1000;
    std::uint64_t seed = 0;
};

struct SweepPoint {
    int depth = 0;
    double mean_rho = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    RegressionFit fit;  // all NaN when ρ̄ does not fall with depth
    double spearman = 0.0;
};

/// Trains a fresh residual network per depth (and repetition) and measures
/// ρ̄ on the first `probe_size` training rows.
SweepResult run_depth_sweep(const SweepConfig& config, const Dataset& train, int jobs = 1);

struct CompareConfig {
    std::vector<int> orders{1, 2, 3, 4};
    std::vector<int> dense_orders{2, 3, 4};
    std::size_t width = 64;
    int depth = 4;
    double dl = 0.5;
    int epochs = 5;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

struct CompareRow {
    std::string arch;
    int order = 0;
    double test_error = 0.0;
    double final_train_loss = 0.0;
};

std::vector<CompareRow> compare_orders(const CompareConfig& config, const Dataset& train, const Dataset& test,
                                       int jobs = 1);

// Artifacts. Every file starts with a comment line carrying the seed.

void write_toy_csv(const std::filesystem::path& path, std::span<const ToyResult> results, std::uint64_t seed);
void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryDump& dump, std::uint64_t seed);
void write_depth_sweep_csv(const std::filesystem::path& path, const SweepResult& result, std::uint64_t seed);
void write_compare_csv(const std::filesystem::path& path, std::span<const CompareRow> rows, std::uint64_t seed);

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::uint64_t seed = 0;
};

/// One polyline per series.
std::string svg_line_plot(std::span<const Series> series, const PlotSpec& spec);
/// One group of circles per series.
std::string svg_scatter_plot(std::span<const Series> series, const PlotSpec& spec);

/// Phase-space plot of every sample's path through the layers, one polyline
/// per sample.
std::string svg_trajectory_plot(const TrajectoryDump& dump, const PlotSpec& spec);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ckdyn::experiments
