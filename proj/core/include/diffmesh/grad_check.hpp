#pragma once

#include <functional>
#include <vector>

#include "diffmesh/tensor.hpp"

namespace diffmesh {

struct GradCheckOptions {
  double step = 1e-6;
  // -1 checks every coordinate; otherwise an evenly spaced subset per tensor.
  std::int64_t max_coords_per_tensor = -1;
};

// Central finite differences against the analytic gradient of a scalar
// function. Returns max over checked coordinates of
// |analytic - numeric| / max(1, |analytic|).
double grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& function,
    const std::vector<Tensor>& inputs, const GradCheckOptions& options = {});

}  // namespace diffmesh
