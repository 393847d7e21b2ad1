#pragma once

// Equivalence suite: every network form that should compute the same
// trajectory is run side by side over a grid of orders, widths, depths and
// seeds.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ckdyn::verify {

struct VerifyConfig {
    std::vector<int> orders{1, 2, 3, 4};
    std::vector<std::size_t> widths{1, 2, 8};
    std::vector<int> depths{3, 10};
    int seeds = 50;
    std::uint64_t first_seed = 0;
    std::size_t batch = 3;
    double tolerance = 1e-9;
    double identity_tolerance = 1e-10;
    double float_roundtrip_tolerance = 1e-12;
    // Mutation hook: flips the sign of one entry of the dense forcing matrix.
    bool flip_dense_sign = false;
};

struct CheckResult {
    std::string name;
    bool passed = true;
    double max_deviation = 0.0;
    std::size_t cases = 0;
    std::string first_failure;  // "k=… d=… L=… seed=…"; empty when passed
};

struct VerifyReport {
    std::vector<CheckResult> checks;

    bool passed() const;
    const CheckResult& find(const std::string& name) const;
};

inline constexpr const char* kCkEquivalence = "ck equivalence";
inline constexpr const char* kStateExtraction = "state extraction";
inline constexpr const char* kDenseEquivalence = "dense equivalence";
inline constexpr const char* kResidualCollapse = "residual collapse";
inline constexpr const char* kDenseIdentity = "dense difference identity";
inline constexpr const char* kBinomialRoundtrip = "binomial roundtrip";
inline constexpr const char* kAlternatingSums = "alternating sums";
inline constexpr const char* kParameterRatio = "parameter ratio";

VerifyReport run_verification(const VerifyConfig& config);

void print_report(std::ostream& os, const VerifyReport& report);

}  // namespace ckdyn::verify
