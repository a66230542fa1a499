#include "diffmesh/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diffmesh/errors.hpp"

namespace diffmesh {

namespace {

void check_noise(std::span<const double> noise, const VertexSet& x,
                 const char* op) {
  if (static_cast<std::int64_t>(noise.size()) != x.count * 3)
    throw ShapeError(std::string(op) + ": noise size " +
                     std::to_string(noise.size()) + " vs " +
                     std::to_string(x.count * 3) + " coordinates");
}

}  // namespace

VertexSet VertexSet::of(std::vector<double> coords, std::int64_t timestep) {
  if (coords.size() % 3 != 0)
    throw ShapeError("VertexSet: coordinate count " +
                     std::to_string(coords.size()) + " not a multiple of 3");
  VertexSet v;
  v.count = static_cast<std::int64_t>(coords.size() / 3);
  v.coords = std::move(coords);
  v.timestep = timestep;
  return v;
}

VertexSet q_sample(const VertexSet& x0, std::int64_t t,
                   std::span<const double> noise, const NoiseSchedule& sched) {
  check_noise(noise, x0, "q_sample");
  const double bar = sched.alpha_bar(t);  // range-checks t
  if (t < 1) throw std::out_of_range("q_sample: t must be >= 1");
  const double a = std::sqrt(bar);
  const double b = std::sqrt(1.0 - bar);
  VertexSet out;
  out.count = x0.count;
  out.timestep = t;
  out.coords.resize(x0.coords.size());
  for (std::size_t i = 0; i < x0.coords.size(); ++i)
    out.coords[i] = a * x0.coords[i] + b * noise[i];
  return out;
}

VertexSet forward_chain_step(const VertexSet& x_prev, std::int64_t t,
                             std::span<const double> noise,
                             const NoiseSchedule& sched) {
  if (x_prev.timestep != t - 1)
    throw StateError("forward_chain_step: input is at timestep " +
                     std::to_string(x_prev.timestep) + ", expected " +
                     std::to_string(t - 1));
  check_noise(noise, x_prev, "forward_chain_step");
  const double beta = sched.beta(t);
  const double a = std::sqrt(1.0 - beta);
  const double b = std::sqrt(beta);
  VertexSet out;
  out.count = x_prev.count;
  out.timestep = t;
  out.coords.resize(x_prev.coords.size());
  for (std::size_t i = 0; i < x_prev.coords.size(); ++i)
    out.coords[i] = a * x_prev.coords[i] + b * noise[i];
  return out;
}

VertexSet ddpm_posterior_step(const VertexSet& x_t,
                              std::span<const double> x0_hat, std::int64_t t,
                              const NoiseSchedule& sched, Rng& rng) {
  if (t == 0) throw StateError("ddpm_posterior_step: cannot step below clean");
  check_noise(x0_hat, x_t, "ddpm_posterior_step");
  const double beta = sched.beta(t);
  const double alpha = sched.alpha(t);
  const double bar_t = sched.alpha_bar(t);
  const double bar_prev = sched.alpha_bar(t - 1);
  const double denom = 1.0 - bar_t;
  const double coef0 = std::sqrt(bar_prev) * beta / denom;
  const double coef_t = std::sqrt(alpha) * (1.0 - bar_prev) / denom;
  const double var = beta * (1.0 - bar_prev) / denom;
  const double sigma = t > 1 ? std::sqrt(var) : 0.0;

  VertexSet out;
  out.count = x_t.count;
  out.timestep = t - 1;
  out.coords.resize(x_t.coords.size());
  for (std::size_t i = 0; i < x_t.coords.size(); ++i) {
    double v = coef0 * x0_hat[i] + coef_t * x_t.coords[i];
    if (sigma > 0.0) v += sigma * rng.gaussian();
    out.coords[i] = v;
  }
  return out;
}

VertexSet ddim_step(const VertexSet& x_t, std::span<const double> x0_hat,
                    std::int64_t t, std::int64_t t_prev,
                    const NoiseSchedule& sched, double eta, Rng* rng) {
  if (t_prev >= t)
    throw ConfigError("ddim_step: t_prev " + std::to_string(t_prev) +
                      " must be below t " + std::to_string(t));
  if (t_prev < 0) throw ConfigError("ddim_step: t_prev must be >= 0");
  if (eta < 0.0 || eta > 1.0)
    throw ConfigError("ddim_step: eta must lie in [0, 1]");
  check_noise(x0_hat, x_t, "ddim_step");

  const double bar_t = sched.alpha_bar(t);
  const double bar_prev = sched.alpha_bar(t_prev);
  const double eps_scale = 1.0 / std::sqrt(1.0 - bar_t);
  const double sqrt_bar_t = std::sqrt(bar_t);
  double sigma = 0.0;
  if (eta > 0.0) {
    sigma = eta * std::sqrt((1.0 - bar_prev) / (1.0 - bar_t)) *
            std::sqrt(1.0 - bar_t / bar_prev);
  }
  const double dir = std::sqrt(std::max(0.0, 1.0 - bar_prev - sigma * sigma));
  const double sqrt_bar_prev = std::sqrt(bar_prev);

  VertexSet out;
  out.count = x_t.count;
  out.timestep = t_prev;
  out.coords.resize(x_t.coords.size());
  for (std::size_t i = 0; i < x_t.coords.size(); ++i) {
    const double eps_hat =
        (x_t.coords[i] - sqrt_bar_t * x0_hat[i]) * eps_scale;
    double v = sqrt_bar_prev * x0_hat[i] + dir * eps_hat;
    if (sigma > 0.0) {
      if (!rng) throw ConfigError("ddim_step: eta > 0 requires an rng");
      v += sigma * rng->gaussian();
    }
    out.coords[i] = v;
  }
  return out;
}

std::vector<std::int64_t> ddim_timesteps(std::int64_t big_t,
                                         std::int64_t steps) {
  if (steps < 1) throw ConfigError("ddim_timesteps: steps must be >= 1");
  if (steps > big_t)
    throw ConfigError("ddim_timesteps: steps " + std::to_string(steps) +
                      " exceeds T " + std::to_string(big_t));
  std::vector<std::int64_t> out(steps + 1);
  for (std::int64_t i = 0; i <= steps; ++i)
    out[i] = big_t - i * big_t / steps;  // floor division, hits T and 0
  return out;
}

VertexSet sample_loop(const DenoiseFn& denoiser, std::int64_t vertex_count,
                      const NoiseSchedule& sched, Rng& rng,
                      const SampleLoopOptions& options) {
  const auto times = ddim_timesteps(sched.timesteps(), options.steps);

  VertexSet x;
  x.count = vertex_count;
  x.timestep = sched.timesteps();
  x.coords = rng.gaussian_vector(static_cast<std::size_t>(vertex_count * 3));

  std::vector<double> x0_hat;
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const std::int64_t t = times[i];
    const std::int64_t t_prev = times[i + 1];
    x0_hat = denoiser(x);
    if (static_cast<std::int64_t>(x0_hat.size()) != vertex_count * 3)
      throw ShapeError("sample_loop: denoiser returned " +
                       std::to_string(x0_hat.size()) + " values, expected " +
                       std::to_string(vertex_count * 3));
    for (auto& v : x0_hat) v = std::clamp(v, -options.clip, options.clip);
    x = ddim_step(x, x0_hat, t, t_prev, sched, options.eta, &rng);
  }
  return x;
}

}  // namespace diffmesh
