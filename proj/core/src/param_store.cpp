#include "diffmesh/param_store.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "diffmesh/errors.hpp"

namespace diffmesh {

namespace {

constexpr char kParamMagic[4] = {'D', 'M', 'V', '1'};
constexpr char kOptimMagic[4] = {'D', 'M', 'O', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

[[noreturn]] void truncated(const std::string& origin) {
  throw IoError("truncated parameter file: " + origin);
}

std::uint32_t get_u32(std::istream& in, const std::string& origin) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) truncated(origin);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& origin) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) truncated(origin);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const std::string& origin) {
  const std::uint64_t bits = get_u64(in, origin);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string get_name(std::istream& in, const std::string& origin) {
  const std::uint32_t len = get_u32(in, origin);
  std::string name(len, '\0');
  if (len && !in.read(name.data(), len)) truncated(origin);
  return name;
}

bool selected(const std::function<bool(const std::string&)>& select,
              const std::string& name) {
  return !select || select(name);
}

}  // namespace

Tensor ParamStore::create(const std::string& name, Shape shape,
                          std::vector<double> values) {
  if (entries_.count(name))
    throw ConfigError("parameter already registered: " + name);
  Tensor t = Tensor::from_values(std::move(shape), std::move(values), true);
  Entry entry;
  entry.tensor = t;
  entry.m1.assign(static_cast<std::size_t>(t.numel()), 0.0);
  entry.m2.assign(static_cast<std::size_t>(t.numel()), 0.0);
  entries_.emplace(name, std::move(entry));
  return t;
}

Tensor ParamStore::create_zeros(const std::string& name, Shape shape) {
  const auto n = numel_of(shape);
  return create(name, std::move(shape),
                std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor ParamStore::create_gaussian(const std::string& name, Shape shape,
                                   double stddev, Rng& rng) {
  const auto n = numel_of(shape);
  std::vector<double> values(static_cast<std::size_t>(n));
  for (auto& v : values) v = rng.gaussian() * stddev;
  return create(name, std::move(shape), std::move(values));
}

bool ParamStore::contains(const std::string& name) const {
  return entries_.count(name) != 0;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second.tensor;
}

std::vector<std::string> ParamStore::names(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, entry] : entries_)
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [name, entry] : entries_) entry.tensor.zero_grad();
}

double ParamStore::grad_norm(
    const std::function<bool(const std::string&)>& select) const {
  double sum = 0.0;
  for (const auto& [name, entry] : entries_) {
    if (!selected(select, name) || !entry.tensor.has_grad()) continue;
    for (double g : entry.tensor.grad()) sum += g * g;
  }
  return std::sqrt(sum);
}

void ParamStore::clip_grad_norm(
    double max_norm, const std::function<bool(const std::string&)>& select) {
  const double norm = grad_norm(select);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (auto& [name, entry] : entries_) {
    if (!selected(select, name) || !entry.tensor.has_grad()) continue;
    for (auto& g : entry.tensor.grad_mut()) g *= scale;
  }
}

void ParamStore::adamw_step(
    const AdamWConfig& config,
    const std::function<bool(const std::string&)>& select) {
  for (auto& [name, entry] : entries_) {
    if (!selected(select, name)) continue;
    if (!entry.tensor.has_grad())
      throw StateError("adamw_step: parameter has no gradient: " + name);
    entry.steps += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(entry.steps));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(entry.steps));
    auto values = entry.tensor.values_mut();
    const auto grad = entry.tensor.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      entry.m1[i] = config.beta1 * entry.m1[i] + (1.0 - config.beta1) * g;
      entry.m2[i] = config.beta2 * entry.m2[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = entry.m1[i] / bc1;
      const double v_hat = entry.m2[i] / bc2;
      values[i] -= config.learning_rate *
                   (m_hat / (std::sqrt(v_hat) + config.eps) +
                    config.weight_decay * values[i]);
    }
  }
  global_step_ += 1;
}

void ParamStore::write(std::ostream& out, bool include_optimizer_state) const {
  out.write(kParamMagic, 4);
  put_u64(out, entries_.size());
  for (const auto& [name, entry] : entries_) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const auto& shape = entry.tensor.shape();
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) put_u64(out, static_cast<std::uint64_t>(e));
    for (double v : entry.tensor.values()) put_f64(out, v);
  }
  if (include_optimizer_state) {
    out.write(kOptimMagic, 4);
    put_u64(out, static_cast<std::uint64_t>(global_step_));
    put_u64(out, entries_.size());
    for (const auto& [name, entry] : entries_) {
      put_u32(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put_u64(out, static_cast<std::uint64_t>(entry.steps));
      for (double v : entry.m1) put_f64(out, v);
      for (double v : entry.m2) put_f64(out, v);
    }
  }
}

ParamStore ParamStore::read(std::istream& in, const std::string& origin) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kParamMagic, 4) != 0)
    throw IoError("bad parameter file magic: " + origin);
  ParamStore store;
  const std::uint64_t count = get_u64(in, origin);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = get_name(in, origin);
    const std::uint32_t rank = get_u32(in, origin);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::int64_t>(get_u64(in, origin));
    const auto n = numel_of(shape);
    std::vector<double> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = get_f64(in, origin);
    store.create(name, std::move(shape), std::move(values));
  }
  // Optional optimizer section.
  char opt[4];
  if (in.read(opt, 4)) {
    if (std::memcmp(opt, kOptimMagic, 4) != 0)
      throw IoError("bad optimizer section magic: " + origin);
    store.global_step_ = static_cast<std::int64_t>(get_u64(in, origin));
    const std::uint64_t opt_count = get_u64(in, origin);
    for (std::uint64_t i = 0; i < opt_count; ++i) {
      const std::string name = get_name(in, origin);
      auto it = store.entries_.find(name);
      if (it == store.entries_.end())
        throw IoError("optimizer state for unknown parameter " + name + ": " +
                      origin);
      it->second.steps = static_cast<std::int64_t>(get_u64(in, origin));
      for (auto& v : it->second.m1) v = get_f64(in, origin);
      for (auto& v : it->second.m2) v = get_f64(in, origin);
    }
  }
  return store;
}

void ParamStore::save(const std::string& path,
                      bool include_optimizer_state) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  write(out, include_optimizer_state);
  if (!out) throw IoError("write failed: " + path);
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  return read(in, path);
}

void ParamStore::assign_from(const ParamStore& other) {
  if (entries_.size() != other.entries_.size())
    throw ConfigError("parameter set mismatch: " +
                      std::to_string(entries_.size()) + " vs " +
                      std::to_string(other.entries_.size()) + " parameters");
  for (auto& [name, entry] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end())
      throw ConfigError("parameter missing from source store: " + name);
    if (entry.tensor.shape() != it->second.tensor.shape())
      throw ConfigError("parameter shape mismatch for " + name + ": " +
                        shape_str(entry.tensor.shape()) + " vs " +
                        shape_str(it->second.tensor.shape()));
    auto dst = entry.tensor.values_mut();
    const auto src = it->second.tensor.values();
    std::copy(src.begin(), src.end(), dst.begin());
    entry.m1 = it->second.m1;
    entry.m2 = it->second.m2;
    entry.steps = it->second.steps;
  }
  global_step_ = other.global_step_;
}

}  // namespace diffmesh
