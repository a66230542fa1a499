#include "diffmesh/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "diffmesh/errors.hpp"

namespace diffmesh {

double grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& function,
    const std::vector<Tensor>& inputs, const GradCheckOptions& options) {
  for (const auto& t : inputs)
    if (!t.requires_grad())
      throw ConfigError("grad_check: all inputs must require grad");

  for (auto t : inputs) t.zero_grad();
  Tensor loss = function(inputs);
  if (loss.numel() != 1) throw ShapeError("grad_check: function must be scalar");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& t : inputs) {
    if (!t.has_grad())
      throw StateError("grad_check: input received no gradient");
    analytic.emplace_back(t.grad().begin(), t.grad().end());
  }

  const double h = options.step;
  double worst = 0.0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor t = inputs[ti];
    auto vals = t.values_mut();
    const std::int64_t n = t.numel();
    std::int64_t checks = n;
    std::int64_t stride = 1;
    if (options.max_coords_per_tensor > 0 && n > options.max_coords_per_tensor) {
      checks = options.max_coords_per_tensor;
      stride = n / checks;
    }
    for (std::int64_t c = 0; c < checks; ++c) {
      const std::int64_t i = std::min(c * stride, n - 1);
      const double saved = vals[i];
      vals[i] = saved + h;
      const double up = function(inputs).item();
      vals[i] = saved - h;
      const double down = function(inputs).item();
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[ti][static_cast<std::size_t>(i)];
      const double err = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace diffmesh
