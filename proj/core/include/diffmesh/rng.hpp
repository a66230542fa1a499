#pragma once

#include <cstdint>
#include <vector>

namespace diffmesh {

// Counter-based generator: the n-th output is a pure function of
// (seed, stream, n), identical on every platform. Gaussian draws use
// Box-Muller so no platform distribution code is involved.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  double uniform();                     // [0, 1)
  double gaussian();                    // standard normal
  std::uint64_t below(std::uint64_t n); // unbiased draw in [0, n)
  void fill_gaussian(std::vector<double>& out);
  std::vector<double> gaussian_vector(std::size_t n);

  // Independent stream derived from the same seed.
  Rng fork(std::uint64_t substream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace diffmesh
