#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ckdyn/architectures.hpp"
#include "ckdyn/autodiff.hpp"
#include "ckdyn/data.hpp"

namespace ckdyn {

/// Mean over rows of -log softmax(logits)[label], max-subtracted.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class AdamState {
public:
    AdamState(std::vector<Parameter> params, AdamHyper hyper = {});

    /// One update from the gradients accumulated on the parameters.
    /// Throws TrainingError naming the parameter on a non-finite gradient.
    void step();
    void zero_grad();

    std::int64_t t() const noexcept { return t_; }
    const AdamHyper& hyper() const noexcept { return hyper_; }
    const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
    const Tensor& second_moment(std::size_t i) const { return v_.at(i); }

private:
    std::vector<Parameter> params_;
    AdamHyper hyper_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::int64_t t_ = 0;
};

struct TrainConfig {
    int epochs = 10;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    bool shuffle = true;
    Mode mode = Mode::direct;

    void validate() const;
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

inline constexpr double kDivergenceThreshold = 1e6;

/// Loss and accuracy of `net` on `data`, evaluated in chunks of `batch_size`.
Evaluation evaluate(const Network& net, const Dataset& data, Mode mode = Mode::direct, std::size_t batch_size = 1024);

/// Predicted class per row.
std::vector<int> predict(const Network& net, const Tensor& inputs, Mode mode = Mode::direct);

/// Mini-batch Adam training, deterministic given config.seed. Metrics are
/// measured after each epoch on the full training set and on `validation`
/// when provided (zeros otherwise).
std::vector<EpochMetrics> train(Network& net, const Dataset& data, const TrainConfig& config,
                                const std::optional<Dataset>& validation = std::nullopt);

void write_metrics_csv(std::ostream& os, std::span<const EpochMetrics> log);

}  // namespace ckdyn
