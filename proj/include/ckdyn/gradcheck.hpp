#pragma once

// Central finite-difference oracle for reverse-mode gradients.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ckdyn/architectures.hpp"
#include "ckdyn/autodiff.hpp"

namespace ckdyn {

struct GradCheckEntry {
    std::string parameter;
    // ‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂); 0 when both vanish.
    double rel_error = 0.0;
    double analytic_norm = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error() const;
    const GradCheckEntry& worst() const;
};

/// Perturbs every entry of every parameter by ±step and evaluates `loss`.
/// `analytic` must hold a gradient for each parameter name.
GradCheckReport check_gradients(std::span<const Parameter> params, const std::function<double()>& loss,
                                const GradientMap& analytic, double step = 1e-6);

/// Softmax cross-entropy of `net` on (inputs, labels), checked over all parameters.
GradCheckReport check_network_gradients(const Network& net, const Tensor& inputs, std::span<const int> labels,
                                        Mode mode, double step = 1e-6);

}  // namespace ckdyn
