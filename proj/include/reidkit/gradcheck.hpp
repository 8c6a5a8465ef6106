#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "reidkit/tensor.hpp"

namespace reidkit {

struct GradCheckOptions {
    double step = 1e-5;
    // Inputs are drawn uniform in [-1, 1]. Entries closer to zero than
    // min_abs are pushed outward, keeping piecewise ops (relu, max_pool,
    // hinge losses) away from their kinks during differencing.
    double min_abs = 0.0;
    // Scales the generated inputs after the min_abs adjustment.
    double input_scale = 1.0;
};

// Compares the analytic gradient of `op` against central finite
// differences on seeded random inputs. When the op output is not scalar it
// is reduced with a fixed random weighting so every output element is
// exercised. Returns max over all input entries of
//   |analytic - numeric| / max(1, |numeric|).
double gradient_check(const std::function<Tensor(const std::vector<Tensor>&)>& op,
                      const std::vector<std::vector<std::size_t>>& shapes,
                      std::uint64_t seed, const GradCheckOptions& opts = {});

}  // namespace reidkit
