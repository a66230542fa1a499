#include "diffmesh/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "diffmesh/errors.hpp"

namespace diffmesh {

namespace {

double cosine_f(std::int64_t t, std::int64_t big_t) {
  constexpr double s = 0.008;
  const double x = (static_cast<double>(t) / static_cast<double>(big_t) + s) /
                   (1.0 + s) * std::numbers::pi / 2.0;
  const double c = std::cos(x);
  return c * c;
}

}  // namespace

NoiseSchedule NoiseSchedule::cosine(std::int64_t timesteps) {
  if (timesteps < 2)
    throw ConfigError("cosine schedule needs T >= 2, got " +
                      std::to_string(timesteps));
  NoiseSchedule sched;
  sched.beta_.resize(timesteps);
  sched.alpha_.resize(timesteps);
  sched.alpha_bar_.resize(timesteps);
  const double f0 = cosine_f(0, timesteps);
  double prev_bar = 1.0;
  double running = 1.0;
  for (std::int64_t t = 1; t <= timesteps; ++t) {
    const double bar = cosine_f(t, timesteps) / f0;
    double beta = 1.0 - bar / prev_bar;
    if (beta > 0.999) beta = 0.999;
    prev_bar = bar;
    const double alpha = 1.0 - beta;
    running *= alpha;
    sched.beta_[t - 1] = beta;
    sched.alpha_[t - 1] = alpha;
    sched.alpha_bar_[t - 1] = running;
  }
  return sched;
}

void NoiseSchedule::check_range(std::int64_t t, std::int64_t lo) const {
  if (t < lo || t > timesteps())
    throw std::out_of_range("timestep " + std::to_string(t) +
                            " outside [" + std::to_string(lo) + ", " +
                            std::to_string(timesteps()) + "]");
}

double NoiseSchedule::beta(std::int64_t t) const {
  check_range(t, 1);
  reads_.fetch_add(1, std::memory_order_relaxed);
  return beta_[t - 1];
}

double NoiseSchedule::alpha(std::int64_t t) const {
  check_range(t, 1);
  reads_.fetch_add(1, std::memory_order_relaxed);
  return alpha_[t - 1];
}

double NoiseSchedule::alpha_bar(std::int64_t t) const {
  check_range(t, 0);
  reads_.fetch_add(1, std::memory_order_relaxed);
  return t == 0 ? 1.0 : alpha_bar_[t - 1];
}

NoiseSchedule::NoiseSchedule(const NoiseSchedule& other)
    : beta_(other.beta_),
      alpha_(other.alpha_),
      alpha_bar_(other.alpha_bar_),
      reads_(other.reads_.load(std::memory_order_relaxed)) {}

NoiseSchedule& NoiseSchedule::operator=(const NoiseSchedule& other) {
  beta_ = other.beta_;
  alpha_ = other.alpha_;
  alpha_bar_ = other.alpha_bar_;
  reads_.store(other.reads_.load(std::memory_order_relaxed),
               std::memory_order_relaxed);
  return *this;
}

NoiseSchedule::NoiseSchedule(NoiseSchedule&& other) noexcept
    : beta_(std::move(other.beta_)),
      alpha_(std::move(other.alpha_)),
      alpha_bar_(std::move(other.alpha_bar_)),
      reads_(other.reads_.load(std::memory_order_relaxed)) {}

NoiseSchedule& NoiseSchedule::operator=(NoiseSchedule&& other) noexcept {
  beta_ = std::move(other.beta_);
  alpha_ = std::move(other.alpha_);
  alpha_bar_ = std::move(other.alpha_bar_);
  reads_.store(other.reads_.load(std::memory_order_relaxed),
               std::memory_order_relaxed);
  return *this;
}

}  // namespace diffmesh
