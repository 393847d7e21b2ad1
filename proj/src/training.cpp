#include "ckdyn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "ckdyn/errors.hpp"
#include "ckdyn/rng.hpp"

namespace ckdyn {

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
    const Tensor& z = logits.value();
    if (z.rank() != 2) throw DimensionError("softmax_cross_entropy: logits must be [B×C], got " + shape_string(z.shape()));
    const std::size_t rows = z.rows(), classes = z.cols();
    if (labels.size() != rows)
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(rows) + " rows");
    Tensor probs(z.shape());
    double total = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw ContractError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                std::to_string(classes) + ")");
        const auto zi = z.row(i);
        const double mx = *std::max_element(zi.begin(), zi.end());
        double s = 0.0;
        for (double v : zi) s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        total += lse - zi[static_cast<std::size_t>(y)];
        auto pi = probs.row(i);
        for (std::size_t c = 0; c < classes; ++c) pi[c] = std::exp(zi[c] - lse);
    }
    const double inv = 1.0 / static_cast<double>(rows);
    std::vector<int> owned(labels.begin(), labels.end());
    return make_op(Tensor::scalar(total * inv), {logits},
                   [probs = std::move(probs), owned = std::move(owned), inv](detail::Node& n) {
                       Tensor g = probs;
                       const double up = n.grad[0] * inv;
                       for (std::size_t i = 0; i < owned.size(); ++i) {
                           auto gi = g.row(i);
                           gi[static_cast<std::size_t>(owned[i])] -= 1.0;
                           for (auto& v : gi) v *= up;
                       }
                       n.parents[0]->accumulate(g);
                   });
}

AdamState::AdamState(std::vector<Parameter> params, AdamHyper hyper) : params_(std::move(params)), hyper_(hyper) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.push_back(Tensor::zeros(p.var.shape()));
        v_.push_back(Tensor::zeros(p.var.shape()));
    }
}

void AdamState::step() {
    const auto& h = hyper_;
    for (const auto& p : params_) {
        if (!p.trainable || !p.var.has_grad()) continue;
        if (!p.var.grad().all_finite()) throw TrainingError("adam: non-finite gradient for parameter '" + p.name + "'");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& p = params_[i];
        if (!p.trainable) continue;
        const Tensor g = p.var.grad();
        Tensor theta = p.var.value();
        auto m = m_[i].data();
        auto v = v_[i].data();
        auto th = theta.data();
        for (std::size_t j = 0; j < th.size(); ++j) {
            m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
            v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            th[j] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.epsilon);
        }
        p.var.assign(std::move(theta));
    }
}

void AdamState::zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ContractError("train: epochs must be >= 0");
    if (batch_size < 1) throw ContractError("train: batch size must be >= 1");
    if (!(learning_rate >= 0.0)) throw ContractError("train: learning rate must be >= 0");
}

namespace {

Tensor gather_rows(const Tensor& inputs, std::span<const std::size_t> idx) {
    const std::size_t c = inputs.cols();
    Tensor out(Shape{idx.size(), c});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto src = inputs.row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::size_t argmax_row(std::span<const double> row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

std::vector<int> predict(const Network& net, const Tensor& inputs, Mode mode) {
    const Tensor z = net.logits(inputs, mode).value();
    std::vector<int> out(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) out[i] = static_cast<int>(argmax_row(z.row(i)));
    return out;
}

Evaluation evaluate(const Network& net, const Dataset& data, Mode mode, std::size_t batch_size) {
    if (data.size() == 0) throw ContractError("evaluate: empty dataset");
    double loss = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const Tensor x = gather_rows(data.inputs, idx);
        const std::span<const int> y(data.labels.data() + start, end - start);
        const Var z = net.logits(x, mode);
        loss += softmax_cross_entropy(z, y).value().item() * static_cast<double>(end - start);
        for (std::size_t i = 0; i < y.size(); ++i)
            if (static_cast<int>(argmax_row(z.value().row(i))) == y[i]) ++correct;
    }
    const double n = static_cast<double>(data.size());
    return {loss / n, static_cast<double>(correct) / n};
}

std::vector<EpochMetrics> train(Network& net, const Dataset& data, const TrainConfig& config,
                                const std::optional<Dataset>& validation) {
    config.validate();
    if (data.size() == 0) throw ContractError("train: empty dataset");
    if (data.input_dim() != net.config().input_dim)
        throw DimensionError("train: dataset input_dim " + std::to_string(data.input_dim()) +
                             " does not match network input_dim " + std::to_string(net.config().input_dim));

    AdamState adam(net.parameters(), AdamHyper{.learning_rate = config.learning_rate});
    Rng rng(config.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<int> labels;
    std::vector<EpochMetrics> log;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.shuffle) rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, end - start);
            labels.resize(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = data.labels[batch[i]];
            const Var loss = softmax_cross_entropy(net.logits(gather_rows(data.inputs, batch), config.mode), labels);
            const double lv = loss.value().item();
            if (!std::isfinite(lv) || lv > kDivergenceThreshold)
                throw TrainingError("train: loss diverged to " + std::to_string(lv) + " in epoch " +
                                    std::to_string(epoch));
            backward(loss);
            adam.step();
            adam.zero_grad();
        }
        EpochMetrics m;
        m.epoch = epoch;
        const auto tr = evaluate(net, data, config.mode);
        if (!std::isfinite(tr.loss) || tr.loss > kDivergenceThreshold)
            throw TrainingError("train: epoch " + std::to_string(epoch) + " loss diverged to " +
                                std::to_string(tr.loss));
        m.train_loss = tr.loss;
        m.train_acc = tr.accuracy;
        if (validation) {
            const auto va = evaluate(net, *validation, config.mode);
            m.val_loss = va.loss;
            m.val_acc = va.accuracy;
        }
        log.push_back(m);
    }
    return log;
}

void write_metrics_csv(std::ostream& os, std::span<const EpochMetrics> log) {
    os << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    char buf[160];
    for (const auto& m : log) {
        std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g\n", m.epoch, m.train_loss, m.train_acc, m.val_loss,
                      m.val_acc);
        os << buf;
    }
}

}  // namespace ckdyn
