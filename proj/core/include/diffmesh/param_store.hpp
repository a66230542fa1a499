#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "diffmesh/rng.hpp"
#include "diffmesh/tensor.hpp"

namespace diffmesh {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Named parameter set with per-parameter AdamW state. Parameter names are
// unique; iteration is always in name order so serialization is stable.
class ParamStore {
 public:
  Tensor create(const std::string& name, Shape shape,
                std::vector<double> values);
  Tensor create_zeros(const std::string& name, Shape shape);
  Tensor create_gaussian(const std::string& name, Shape shape, double stddev,
                         Rng& rng);

  bool contains(const std::string& name) const;
  Tensor get(const std::string& name) const;
  std::vector<std::string> names(const std::string& prefix = "") const;
  std::size_t size() const { return entries_.size(); }

  void zero_grads();
  double grad_norm(
      const std::function<bool(const std::string&)>& select = {}) const;
  // Scales all selected gradients so their global norm is at most max_norm.
  void clip_grad_norm(
      double max_norm,
      const std::function<bool(const std::string&)>& select = {});

  // Decoupled-weight-decay Adam over the selected parameters. Every selected
  // parameter must carry a gradient from a prior backward().
  void adamw_step(const AdamWConfig& config,
                  const std::function<bool(const std::string&)>& select = {});

  std::int64_t step_count() const { return global_step_; }
  void set_step_count(std::int64_t step) { global_step_ = step; }

  // File layout: magic "DMV1", u64 count, then per parameter
  // (u32 name length, UTF-8 name, u32 rank, u64 extents, f64 values), all
  // little-endian. An optional "DMO1" section with optimizer state follows.
  void save(const std::string& path, bool include_optimizer_state = true) const;
  static ParamStore load(const std::string& path);
  void write(std::ostream& out, bool include_optimizer_state = true) const;
  static ParamStore read(std::istream& in, const std::string& origin);

  // Overwrites values (and optimizer state) from another store; names and
  // shapes must match exactly.
  void assign_from(const ParamStore& other);

 private:
  struct Entry {
    Tensor tensor;
    std::vector<double> m1;
    std::vector<double> m2;
    std::int64_t steps = 0;
  };
  std::map<std::string, Entry> entries_;
  std::int64_t global_step_ = 0;
};

}  // namespace diffmesh
