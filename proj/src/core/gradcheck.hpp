#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/model.hpp"

namespace oal {

// Small-dimension configuration for finite differencing; every extent should
// stay at or below 8 to keep the oracle tractable.
struct GradcheckDims {
    std::int64_t feature_count = 5;
    std::int64_t static_dim = 2;
    std::int64_t embed_k = 3;
    std::int64_t time_m = 2;
    std::int64_t out_d = 3;
    std::vector<std::int64_t> hidden = {3};
    std::int64_t batch = 6;
};

// Per-component maximum gradient discrepancy between reverse mode and
// central finite differences, measured as |a - f| / max(|a|, |f|, 0.01).
// The 0.01 floor makes the 1e-4 relative threshold act as a 1e-6 absolute
// threshold near zero.
struct GradcheckReport {
    double encoder = 0.0;
    double bce = 0.0;
    double rayleigh = 0.0;
    double total = 0.0;
    double threshold = 1e-4;
    bool pass = false;

    std::vector<std::string> failing_components() const;
};

// Builds a random batch and random parameters from the seed, then checks
// d(scalar)/d(theta) for four scalars: sum of squared embeddings (encoder
// path), the cross-entropy, the Rayleigh quotient, and the total loss.
// fault_injection, when non-zero, is added to one reverse-mode gradient
// coordinate before comparison (test hook for the failure path).
GradcheckReport run_gradcheck(std::uint64_t seed, const GradcheckDims& dims,
                              double fault_injection = 0.0);

}  // namespace oal
