#include "ckdyn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ckdyn/errors.hpp"
#include "ckdyn/training.hpp"

namespace ckdyn {

double GradCheckReport::max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) {
        if (std::isnan(e.rel_error)) return e.rel_error;
        m = std::max(m, e.rel_error);
    }
    return m;
}

const GradCheckEntry& GradCheckReport::worst() const {
    if (entries.empty()) throw ContractError("gradcheck: empty report");
    return *std::max_element(entries.begin(), entries.end(),
                             [](const auto& a, const auto& b) { return a.rel_error < b.rel_error; });
}

GradCheckReport check_gradients(std::span<const Parameter> params, const std::function<double()>& loss,
                                const GradientMap& analytic, double step) {
    if (!(step > 0.0)) throw ContractError("gradcheck: step must be positive");
    GradCheckReport report;
    for (const auto& p : params) {
        const auto it = analytic.find(p.name);
        if (it == analytic.end()) throw ContractError("gradcheck: no analytic gradient for '" + p.name + "'");
        const Tensor& a = it->second;
        if (a.shape() != p.var.shape())
            throw DimensionError("gradcheck: gradient of '" + p.name + "' has shape " + shape_string(a.shape()));

        const Tensor original = p.var.value();
        Tensor numeric(original.shape());
        Tensor probe = original;
        for (std::size_t i = 0; i < original.size(); ++i) {
            probe[i] = original[i] + step;
            p.var.assign(probe);
            const double up = loss();
            probe[i] = original[i] - step;
            p.var.assign(probe);
            const double down = loss();
            probe[i] = original[i];
            numeric[i] = (up - down) / (2.0 * step);
        }
        p.var.assign(original);

        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            diff += (a[i] - numeric[i]) * (a[i] - numeric[i]);
            na += a[i] * a[i];
            nn += numeric[i] * numeric[i];
        }
        const double scale = std::sqrt(std::max(na, nn));
        report.entries.push_back({p.name, scale > 0.0 ? std::sqrt(diff) / scale : std::sqrt(diff), std::sqrt(na)});
    }
    return report;
}

GradCheckReport check_network_gradients(const Network& net, const Tensor& inputs, std::span<const int> labels,
                                        Mode mode, double step) {
    const auto params = net.parameters();
    for (const auto& p : params) p.var.zero_grad();
    const GradientMap analytic = backward(softmax_cross_entropy(net.logits(inputs, mode), labels));
    for (const auto& p : params) p.var.zero_grad();
    const auto loss = [&] { return softmax_cross_entropy(net.logits(inputs, mode), labels).value().item(); };
    return check_gradients(params, loss, analytic, step);
}

}  // namespace ckdyn
