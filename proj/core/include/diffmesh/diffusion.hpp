#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "diffmesh/rng.hpp"
#include "diffmesh/schedule.hpp"

namespace diffmesh {

// Vertex coordinates at a diffusion timestep; timestep 0 is clean. Coords are
// dimensionless root-centered coordinates in the normalization box.
struct VertexSet {
  std::vector<double> coords;  // count x 3, row-major
  std::int64_t count = 0;
  std::int64_t timestep = 0;

  static VertexSet of(std::vector<double> coords, std::int64_t timestep = 0);
};

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
VertexSet q_sample(const VertexSet& x0, std::int64_t t,
                   std::span<const double> noise, const NoiseSchedule& sched);

// Single forward chain step: sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps.
VertexSet forward_chain_step(const VertexSet& x_prev, std::int64_t t,
                             std::span<const double> noise,
                             const NoiseSchedule& sched);

// Sample from q(x_{t-1} | x_t, x0_hat); no noise is added at t == 1.
VertexSet ddpm_posterior_step(const VertexSet& x_t,
                              std::span<const double> x0_hat, std::int64_t t,
                              const NoiseSchedule& sched, Rng& rng);

// DDIM step from t to t_prev < t; eta == 0 is deterministic (rng unused).
VertexSet ddim_step(const VertexSet& x_t, std::span<const double> x0_hat,
                    std::int64_t t, std::int64_t t_prev,
                    const NoiseSchedule& sched, double eta, Rng* rng);

// Descending timestep subsequence for a few-step sampler: starts at T,
// ends at 0, evenly spaced rounding down; length steps + 1.
std::vector<std::int64_t> ddim_timesteps(std::int64_t big_t,
                                         std::int64_t steps);

// Maps a noisy vertex set (carrying its timestep) to the predicted clean set.
using DenoiseFn =
    std::function<std::vector<double>(const VertexSet& noisy)>;

struct SampleLoopOptions {
  std::int64_t steps = 10;
  double eta = 0.0;
  double clip = 1.5;  // predicted x0 is clamped to [-clip, clip]^3
};

// Starts from x_T ~ N(0, I), walks the DDIM subsequence, returns the final
// predicted clean vertex set.
VertexSet sample_loop(const DenoiseFn& denoiser, std::int64_t vertex_count,
                      const NoiseSchedule& sched, Rng& rng,
                      const SampleLoopOptions& options = {});

}  // namespace diffmesh
