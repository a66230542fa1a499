#include "diffmesh/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "diffmesh/errors.hpp"

namespace diffmesh {

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

std::shared_ptr<detail::TensorNode> make_node(Shape shape,
                                              std::vector<double> values,
                                              bool requires_grad) {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

// Registers an op result. Parents and the backward closure are recorded only
// when some input requires grad and recording is enabled.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs,
                   std::function<void(detail::TensorNode&)> backward_fn) {
  bool track = detail::grad_enabled();
  bool any_grad = false;
  if (track) {
    for (const auto& t : inputs) {
      if (t.requires_grad()) {
        any_grad = true;
        break;
      }
    }
  }
  auto node = make_node(std::move(shape), std::move(values), track && any_grad);
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (const auto& t : inputs) node->parents.push_back(t.handle());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(node));
}

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

void check_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got shape " +
                     shape_str(t.shape()));
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class BinKind { kAdd, kSub, kMul, kDiv };

double bin_eval(BinKind k, double a, double b) {
  switch (k) {
    case BinKind::kAdd: return a + b;
    case BinKind::kSub: return a - b;
    case BinKind::kMul: return a * b;
    case BinKind::kDiv: return a / b;
  }
  return 0.0;
}

Tensor binary_broadcast(BinKind kind, const char* name, const Tensor& a,
                        const Tensor& b) {
  check_defined(a, name);
  check_defined(b, name);
  const bool b_small = b.numel() == 1 || is_suffix(b.shape(), a.shape());
  const bool a_small = a.numel() == 1 || is_suffix(a.shape(), b.shape());
  if (!b_small && !a_small)
    throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()) +
                     " do not broadcast over leading axes");

  // Orient so that y broadcasts into x. Same-shape tensors take the first
  // branch with a trivial modulus.
  const Tensor& x = b_small ? a : b;
  const Tensor& y = b_small ? b : a;
  const bool swapped = !b_small;

  const auto xv = x.values();
  const auto yv = y.values();
  const std::int64_t n = x.numel();
  const std::int64_t m = y.numel();

  std::vector<double> out(static_cast<std::size_t>(n));
  if (!swapped) {
    for (std::int64_t i = 0; i < n; ++i)
      out[i] = bin_eval(kind, xv[i], yv[i % m]);
  } else {
    for (std::int64_t i = 0; i < n; ++i)
      out[i] = bin_eval(kind, yv[i % m], xv[i]);
  }

  auto backward = [kind, swapped, n, m](detail::TensorNode& self) {
    auto& xa = *self.parents[0];  // the large operand
    auto& ya = *self.parents[1];  // the broadcast operand
    const auto& g = self.grad;
    if (xa.requires_grad) {
      xa.ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        double d = 0.0;
        switch (kind) {
          case BinKind::kAdd: d = g[i]; break;
          case BinKind::kSub: d = swapped ? -g[i] : g[i]; break;
          case BinKind::kMul: d = g[i] * ya.values[i % m]; break;
          case BinKind::kDiv:
            d = swapped ? -g[i] * ya.values[i % m] /
                              (xa.values[i] * xa.values[i])
                        : g[i] / ya.values[i % m];
            break;
        }
        xa.grad[i] += d;
      }
    }
    if (ya.requires_grad) {
      ya.ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        double d = 0.0;
        switch (kind) {
          case BinKind::kAdd: d = g[i]; break;
          case BinKind::kSub: d = swapped ? g[i] : -g[i]; break;
          case BinKind::kMul: d = g[i] * xa.values[i]; break;
          case BinKind::kDiv:
            d = swapped ? g[i] / xa.values[i]
                        : -g[i] * xa.values[i] /
                              (ya.values[i % m] * ya.values[i % m]);
            break;
        }
        ya.grad[i % m] += d;
      }
    }
  };

  // Parent order is (large, broadcast) regardless of call order.
  return make_result(x.shape(), std::move(out), {x, y}, std::move(backward));
}

Tensor unary_elementwise(const char* name, const Tensor& x,
                         const std::function<double(double)>& f,
                         const std::function<double(double, double)>& df) {
  check_defined(x, name);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto backward = [df](detail::TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.values.size(); ++i)
      p.grad[i] += self.grad[i] * df(p.values[i], self.values[i]);
  };
  return make_result(x.shape(), std::move(out), {x}, std::move(backward));
}

}  // namespace

namespace detail {

void TensorNode::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

bool grad_enabled() { return g_grad_enabled; }

}  // namespace detail

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = numel_of(shape);
  return wrap(make_node(std::move(shape),
                        std::vector<double>(static_cast<std::size_t>(n), 0.0),
                        requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = numel_of(shape);
  return wrap(make_node(std::move(shape),
                        std::vector<double>(static_cast<std::size_t>(n), value),
                        requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (numel_of(shape) != static_cast<std::int64_t>(values.size()))
    throw ShapeError("from_values: shape " + shape_str(shape) + " expects " +
                     std::to_string(numel_of(shape)) + " values, got " +
                     std::to_string(values.size()));
  return wrap(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::int64_t Tensor::rank() const { return static_cast<std::int64_t>(node_->shape.size()); }
std::int64_t Tensor::dim(std::size_t axis) const { return node_->shape.at(axis); }
std::int64_t Tensor::numel() const { return node_->numel(); }

std::span<const double> Tensor::values() const {
  return {node_->values.data(), node_->values.size()};
}

std::span<double> Tensor::values_mut() {
  if (node_->backward_fn)
    throw StateError("values_mut: refusing to mutate a non-leaf tensor");
  return {node_->values.data(), node_->values.size()};
}

double Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
  return node_->values[0];
}

double Tensor::at(std::int64_t flat_index) const {
  return node_->values.at(static_cast<std::size_t>(flat_index));
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (node_->backward_fn)
    throw StateError("set_requires_grad: not a leaf tensor");
  node_->requires_grad = value;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  return {node_->grad.data(), node_->grad.size()};
}

std::span<double> Tensor::grad_mut() {
  node_->ensure_grad();
  return {node_->grad.data(), node_->grad.size()};
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  return wrap(make_node(node_->shape, node_->values, false));
}

Tensor Tensor::wrap(std::shared_ptr<detail::TensorNode> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_broadcast(BinKind::kAdd, "add", a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_broadcast(BinKind::kSub, "sub", a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_broadcast(BinKind::kMul, "mul", a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_broadcast(BinKind::kDiv, "div", a, b); }

Tensor add_scalar(const Tensor& a, double s) {
  return unary_elementwise("add_scalar", a,
                           [s](double v) { return v + s; },
                           [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_elementwise("mul_scalar", a,
                           [s](double v) { return v * s; },
                           [s](double, double) { return s; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  const std::int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));

  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0, a.values().data(),
              static_cast<int>(k), b.values().data(), static_cast<int>(n), 0.0,
              out.data(), static_cast<int>(n));

  auto backward = [m, n, k](detail::TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double* g = self.grad.data();
    if (pa.requires_grad) {
      pa.ensure_grad();
      // dA += dC * B^T
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(m),
                  static_cast<int>(k), static_cast<int>(n), 1.0, g,
                  static_cast<int>(n), pb.values.data(), static_cast<int>(n),
                  1.0, pa.grad.data(), static_cast<int>(k));
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      // dB += A^T * dC
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(k),
                  static_cast<int>(n), static_cast<int>(m), 1.0,
                  pa.values.data(), static_cast<int>(k), g,
                  static_cast<int>(n), 1.0, pb.grad.data(),
                  static_cast<int>(n));
    }
  };
  return make_result({m, n}, std::move(out), {a, b}, std::move(backward));
}

Tensor gelu(const Tensor& x) {
  return unary_elementwise(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

Tensor sqrt_elem(const Tensor& x) {
  return unary_elementwise(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor abs_elem(const Tensor& x) {
  return unary_elementwise(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor softmax_rows(const Tensor& x) {
  check_defined(x, "softmax_rows");
  check_rank2(x, "softmax_rows");
  const std::int64_t r = x.dim(0), c = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(r * c));
  for (std::int64_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * c;
    double mx = row[0];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      const double e = std::exp(row[j] - mx);
      out[i * c + j] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::int64_t j = 0; j < c; ++j) out[i * c + j] *= inv;
  }
  auto backward = [r, c](detail::TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::int64_t i = 0; i < r; ++i) {
      const double* y = self.values.data() + i * c;
      const double* g = self.grad.data() + i * c;
      double dot = 0.0;
      for (std::int64_t j = 0; j < c; ++j) dot += y[j] * g[j];
      double* pg = p.grad.data() + i * c;
      for (std::int64_t j = 0; j < c; ++j) pg[j] += y[j] * (g[j] - dot);
    }
  };
  return make_result(x.shape(), std::move(out), {x}, std::move(backward));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  check_defined(x, "layer_norm");
  check_defined(gain, "layer_norm");
  check_defined(bias, "layer_norm");
  if (x.rank() < 1) throw ShapeError("layer_norm: rank >= 1 required");
  const std::int64_t d = x.shape().back();
  if (d < 2) throw ShapeError("layer_norm: last axis must have extent >= 2");
  if (gain.numel() != d || bias.numel() != d)
    throw ShapeError("layer_norm: gain/bias length " +
                     std::to_string(gain.numel()) + "/" +
                     std::to_string(bias.numel()) + " vs axis " +
                     std::to_string(d));

  constexpr double kEps = 1e-5;
  const std::int64_t groups = x.numel() / d;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();

  std::vector<double> out(xv.size());
  auto mean = std::make_shared<std::vector<double>>(groups);
  auto inv_std = std::make_shared<std::vector<double>>(groups);
  for (std::int64_t gidx = 0; gidx < groups; ++gidx) {
    const double* row = xv.data() + gidx * d;
    double mu = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double c = row[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kEps);
    (*mean)[gidx] = mu;
    (*inv_std)[gidx] = is;
    double* orow = out.data() + gidx * d;
    for (std::int64_t j = 0; j < d; ++j)
      orow[j] = (row[j] - mu) * is * gv[j] + bv[j];
  }

  auto backward = [groups, d, mean, inv_std](detail::TensorNode& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    if (px.requires_grad) px.ensure_grad();
    if (pg.requires_grad) pg.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::int64_t gi = 0; gi < groups; ++gi) {
      const double mu = (*mean)[gi];
      const double is = (*inv_std)[gi];
      const double* xrow = px.values.data() + gi * d;
      const double* grow = self.grad.data() + gi * d;
      if (pg.requires_grad || pb.requires_grad) {
        for (std::int64_t j = 0; j < d; ++j) {
          const double xhat = (xrow[j] - mu) * is;
          if (pg.requires_grad) pg.grad[j] += grow[j] * xhat;
          if (pb.requires_grad) pb.grad[j] += grow[j];
        }
      }
      if (px.requires_grad) {
        double sum_h = 0.0, sum_hx = 0.0;  // h = g * gain
        for (std::int64_t j = 0; j < d; ++j) {
          const double h = grow[j] * pg.values[j];
          const double xhat = (xrow[j] - mu) * is;
          sum_h += h;
          sum_hx += h * xhat;
        }
        double* gx = px.grad.data() + gi * d;
        for (std::int64_t j = 0; j < d; ++j) {
          const double h = grow[j] * pg.values[j];
          const double xhat = (xrow[j] - mu) * is;
          gx[j] += is * (h - inv_d * sum_h - xhat * inv_d * sum_hx);
        }
      }
    }
  };
  return make_result(x.shape(), std::move(out), {x, gain, bias},
                     std::move(backward));
}

Tensor gather_rows(const Tensor& x, std::vector<std::int64_t> indices) {
  check_defined(x, "gather_rows");
  if (x.rank() < 2) throw ShapeError("gather_rows: rank >= 2 required");
  const std::int64_t rows = x.dim(0);
  const std::int64_t row_size = x.numel() / rows;
  for (auto i : indices)
    if (i < 0 || i >= rows)
      throw ShapeError("gather_rows: index " + std::to_string(i) +
                       " out of range [0," + std::to_string(rows) + ")");

  Shape out_shape = x.shape();
  out_shape[0] = static_cast<std::int64_t>(indices.size());
  const auto xv = x.values();
  std::vector<double> out(indices.size() * static_cast<std::size_t>(row_size));
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(xv.data() + indices[i] * row_size, row_size,
                out.data() + static_cast<std::int64_t>(i) * row_size);

  auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(indices));
  auto backward = [idx, row_size](detail::TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      const double* g = self.grad.data() + static_cast<std::int64_t>(i) * row_size;
      double* dst = p.grad.data() + (*idx)[i] * row_size;
      for (std::int64_t j = 0; j < row_size; ++j) dst[j] += g[j];
    }
  };
  return make_result(std::move(out_shape), std::move(out), {x},
                     std::move(backward));
}

Tensor scatter_add_rows(const Tensor& base, std::vector<std::int64_t> indices,
                        const Tensor& rows) {
  check_defined(base, "scatter_add_rows");
  check_defined(rows, "scatter_add_rows");
  if (base.rank() < 2 || rows.rank() < 2)
    throw ShapeError("scatter_add_rows: rank >= 2 required");
  const std::int64_t n_base = base.dim(0);
  const std::int64_t row_size = base.numel() / n_base;
  if (rows.numel() / rows.dim(0) != row_size)
    throw ShapeError("scatter_add_rows: row size mismatch " +
                     shape_str(base.shape()) + " vs " + shape_str(rows.shape()));
  if (static_cast<std::int64_t>(indices.size()) != rows.dim(0))
    throw ShapeError("scatter_add_rows: " + std::to_string(indices.size()) +
                     " indices for " + std::to_string(rows.dim(0)) + " rows");
  for (auto i : indices)
    if (i < 0 || i >= n_base)
      throw ShapeError("scatter_add_rows: index " + std::to_string(i) +
                       " out of range [0," + std::to_string(n_base) + ")");

  std::vector<double> out(base.values().begin(), base.values().end());
  const auto rv = rows.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    double* dst = out.data() + indices[i] * row_size;
    const double* src = rv.data() + static_cast<std::int64_t>(i) * row_size;
    for (std::int64_t j = 0; j < row_size; ++j) dst[j] += src[j];
  }

  auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(indices));
  auto backward = [idx, row_size](detail::TensorNode& self) {
    auto& pb = *self.parents[0];
    auto& pr = *self.parents[1];
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb.grad[i] += self.grad[i];
    }
    if (pr.requires_grad) {
      pr.ensure_grad();
      for (std::size_t i = 0; i < idx->size(); ++i) {
        const double* g = self.grad.data() + (*idx)[i] * row_size;
        double* dst = pr.grad.data() + static_cast<std::int64_t>(i) * row_size;
        for (std::int64_t j = 0; j < row_size; ++j) dst[j] += g[j];
      }
    }
  };
  return make_result(base.shape(), std::move(out), {base, rows},
                     std::move(backward));
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_defined(x, "reshape");
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " +
                     shape_str(shape) + " changes element count");
  std::vector<double> out(x.values().begin(), x.values().end());
  auto backward = [](detail::TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i];
  };
  return make_result(std::move(shape), std::move(out), {x}, std::move(backward));
}

Tensor transpose_last_two(const Tensor& x) {
  check_defined(x, "transpose_last_two");
  if (x.rank() < 2) throw ShapeError("transpose_last_two: rank >= 2 required");
  Shape shape = x.shape();
  const std::int64_t r = shape[shape.size() - 2];
  const std::int64_t c = shape[shape.size() - 1];
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  const std::int64_t batches = x.numel() / (r * c);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::int64_t b = 0; b < batches; ++b) {
    const double* src = xv.data() + b * r * c;
    double* dst = out.data() + b * r * c;
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  }
  auto backward = [batches, r, c](detail::TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::int64_t b = 0; b < batches; ++b) {
      const double* g = self.grad.data() + b * r * c;
      double* dst = p.grad.data() + b * r * c;
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) dst[i * c + j] += g[j * r + i];
    }
  };
  return make_result(std::move(shape), std::move(out), {x}, std::move(backward));
}

Tensor sum_all(const Tensor& x) {
  check_defined(x, "sum_all");
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto backward = [](detail::TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = self.grad[0];
    for (auto& d : p.grad) d += g;
  };
  return make_result({1}, {s}, {x}, std::move(backward));
}

Tensor mean_all(const Tensor& x) {
  check_defined(x, "mean_all");
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  auto backward = [inv](detail::TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = self.grad[0] * inv;
    for (auto& d : p.grad) d += g;
  };
  return make_result({1}, {s * inv}, {x}, std::move(backward));
}

Tensor mse(const Tensor& a, const Tensor& b) {
  check_defined(a, "mse");
  check_defined(b, "mse");
  if (a.shape() != b.shape())
    throw ShapeError("mse: shapes differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const auto av = a.values();
  const auto bv = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  const double inv = 1.0 / static_cast<double>(a.numel());
  auto backward = [inv](detail::TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double g = self.grad[0];
    if (pa.requires_grad) pa.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    for (std::size_t i = 0; i < pa.values.size(); ++i) {
      const double d = 2.0 * inv * (pa.values[i] - pb.values[i]) * g;
      if (pa.requires_grad) pa.grad[i] += d;
      if (pb.requires_grad) pb.grad[i] -= d;
    }
  };
  return make_result({1}, {s * inv}, {a, b}, std::move(backward));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ShapeError("backward: undefined tensor");
  if (loss.numel() != 1)
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw StateError("backward: loss does not require grad");

  // Iterative post-order DFS; reverse gives a valid topological order.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  struct Frame {
    detail::TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node(), 0});
  visited.insert(loss.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }
}

}  // namespace diffmesh
