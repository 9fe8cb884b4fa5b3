#pragma once

// Dense f64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle to an immutable value node. Ops record their
// parents and a backward closure when any input requires grad; backward()
// walks the recorded graph in a deterministic reverse topological order, so
// repeated runs accumulate gradients in the same order bit for bit.
//
// Most ops work on a 2-D view of their operands: rank 0 is 1x1, rank 1 [n]
// is a 1xn row, rank 2 is itself. Binary elementwise ops broadcast along
// any 2-D axis of extent 1.

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lps {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor();

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor eye(std::size_t n);
  // Column vector [n, 1].
  static Tensor column(std::vector<double> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;  // of the 2-D view
  std::size_t cols() const;  // of the 2-D view

  std::span<const double> data() const;
  // Writable storage; only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  // Allocates (if needed) and zeroes the grad buffer.
  void zero_grad();

  // Reverse-mode pass from this scalar. Leaf grads accumulate across calls.
  void backward() const;

  // Same values, cut from the graph.
  Tensor detach() const;

  // Identity of the underlying node (used by the optimizer's state map).
  const void* id() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
  friend struct TensorAccess;
};

// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor neg(const Tensor& x);
Tensor sqrt(const Tensor& x);
// log(1 + e^x), computed without overflow.
Tensor softplus(const Tensor& x);
// max(x, lo); gradient passes where x > lo.
Tensor clamp_min(const Tensor& x, double lo);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

// Full reductions return a rank-0 tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// 2-D reductions keep the reduced axis with extent 1.
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x, int axis);
Tensor logsumexp(const Tensor& x, int axis);
Tensor softmax_rows(const Tensor& x);

Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);

// x / sqrt(sum(x^2) + eps) over the whole tensor.
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

// Forward value is `hard` (copied exactly); the backward pass routes the
// incoming gradient unchanged to `relaxed`.
Tensor straight_through(const Tensor& hard, const Tensor& relaxed);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace lps
