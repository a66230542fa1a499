#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace diffmesh {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward touches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
  void ensure_grad();
};

bool grad_enabled();

}  // namespace detail

// Disables graph recording on the current thread; used for inference paths.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense 64-bit real tensor participating in a per-forward-pass reverse-mode
// graph. Value-semantics handle; copies share the underlying node. The graph
// is held alive by the result tensors and freed when they go out of scope.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::int64_t rank() const;
  std::int64_t dim(std::size_t axis) const;
  std::int64_t numel() const;

  std::span<const double> values() const;
  // Mutation is only legal on leaf tensors (parameters, data buffers).
  std::span<double> values_mut();

  double item() const;  // numel() must be 1
  double at(std::int64_t flat_index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);  // leaf tensors only
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  Tensor detach() const;  // copies values into a fresh constant leaf

  detail::TensorNode* node() const { return node_.get(); }
  std::shared_ptr<detail::TensorNode> handle() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::TensorNode> node);

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Elementwise with broadcasting of the smaller operand over leading axes
// (its shape must be a suffix of the other's; single-element tensors
// broadcast everywhere).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor matmul(const Tensor& a, const Tensor& b);  // rank-2 only

Tensor gelu(const Tensor& x);       // exact erf form
Tensor sqrt_elem(const Tensor& x);  // requires strictly positive inputs
Tensor abs_elem(const Tensor& x);

Tensor softmax_rows(const Tensor& x);  // rank-2, max-subtracted rows
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

Tensor gather_rows(const Tensor& x, std::vector<std::int64_t> indices);
Tensor scatter_add_rows(const Tensor& base, std::vector<std::int64_t> indices,
                        const Tensor& rows);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose_last_two(const Tensor& x);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

// Reverse-mode sweep from a scalar loss. Gradients accumulate additively into
// every reachable tensor with requires_grad; call zero_grad between steps.
void backward(const Tensor& loss);

}  // namespace diffmesh
