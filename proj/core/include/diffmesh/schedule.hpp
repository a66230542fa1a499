#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

namespace diffmesh {

// Precomputed beta/alpha/alpha-bar tables for T timesteps. Timesteps are
// 1-based; alpha_bar(0) == 1 by convention. Accessors count reads so tests
// can assert the tables stay untouched in non-diffusion configurations.
class NoiseSchedule {
 public:
  // alpha_bar(t) = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2),
  // s = 0.008; beta derived from consecutive ratios and clipped to 0.999,
  // then alpha_bar rebuilt as the running product of (1 - beta).
  static NoiseSchedule cosine(std::int64_t timesteps);

  std::int64_t timesteps() const { return static_cast<std::int64_t>(beta_.size()); }
  double beta(std::int64_t t) const;
  double alpha(std::int64_t t) const;
  double alpha_bar(std::int64_t t) const;

  std::uint64_t read_count() const { return reads_.load(std::memory_order_relaxed); }
  void reset_read_count() const { reads_.store(0, std::memory_order_relaxed); }

  NoiseSchedule(const NoiseSchedule& other);
  NoiseSchedule& operator=(const NoiseSchedule& other);
  NoiseSchedule(NoiseSchedule&&) noexcept;
  NoiseSchedule& operator=(NoiseSchedule&&) noexcept;

 private:
  NoiseSchedule() = default;
  void check_range(std::int64_t t, std::int64_t lo) const;

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  mutable std::atomic<std::uint64_t> reads_{0};
};

}  // namespace diffmesh
