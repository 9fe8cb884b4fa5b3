#include "lps/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "lps/errors.hpp"
#include "lps/kernels.hpp"

namespace lps {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  std::uint64_t visit = 0;

  std::size_t rows() const {
    if (shape.size() < 2) return 1;
    return shape[0];
  }
  std::size_t cols() const {
    if (shape.empty()) return 1;
    if (shape.size() == 1) return shape[0];
    return value.size() / shape[0];
  }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

struct TensorAccess {
  static const NodePtr& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }
};

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_visit_epoch{0};

const NodePtr& N(const Tensor& t) {
  if (!t.defined()) throw ContractError("operation on an undefined tensor");
  return TensorAccess::node(t);
}

std::string shapes_msg(const char* op, const Tensor& a, const Tensor& b) {
  return std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
         shape_str(b.shape());
}

// Builds the result node and records it on the tape if needed. `backward`
// reads the result's grad and accumulates into parents that require grad.
Tensor make(Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
            std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) track = track || p->requires_grad;
  }
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return TensorAccess::wrap(std::move(n));
}

double* grad_of(const NodePtr& p) {
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

struct View2 {
  std::size_t r, c;
};

View2 view(const Node& n) { return {n.rows(), n.cols()}; }

// Broadcast bookkeeping for binary elementwise ops.
struct Broadcast {
  std::size_t rows, cols;
  View2 a, b;
  Shape out_shape;
  bool same;
};

Broadcast broadcast(const char* op, const Tensor& ta, const Tensor& tb) {
  const Node& a = *N(ta);
  const Node& b = *N(tb);
  Broadcast bc{};
  bc.a = view(a);
  bc.b = view(b);
  if (a.shape == b.shape) {
    bc.same = true;
    bc.rows = bc.a.r;
    bc.cols = bc.a.c;
    bc.out_shape = a.shape;
    return bc;
  }
  bc.same = false;
  auto merge = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw DimensionError(shapes_msg(op, ta, tb));
  };
  bc.rows = merge(bc.a.r, bc.b.r);
  bc.cols = merge(bc.a.c, bc.b.c);
  if (a.shape.size() > 2 || b.shape.size() > 2) {
    if (a.value.size() != 1 && b.value.size() != 1) throw DimensionError(shapes_msg(op, ta, tb));
  }
  // Keep the shape of whichever operand already spans the broadcast extent.
  if (bc.a.r == bc.rows && bc.a.c == bc.cols)
    bc.out_shape = a.shape;
  else if (bc.b.r == bc.rows && bc.b.c == bc.cols)
    bc.out_shape = b.shape;
  else
    bc.out_shape = {bc.rows, bc.cols};
  return bc;
}

inline std::size_t bidx(const View2& v, std::size_t i, std::size_t j) {
  return (v.r == 1 ? 0 : i) * v.c + (v.c == 1 ? 0 : j);
}

template <class Fwd, class Da, class Db>
Tensor binary(const char* op, const Tensor& ta, const Tensor& tb, Fwd fwd, Da da, Db db) {
  const Broadcast bc = broadcast(op, ta, tb);
  const NodePtr& a = N(ta);
  const NodePtr& b = N(tb);
  std::vector<double> out(bc.rows * bc.cols);
  if (bc.same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a->value[i], b->value[i]);
  } else {
    for (std::size_t i = 0; i < bc.rows; ++i)
      for (std::size_t j = 0; j < bc.cols; ++j)
        out[i * bc.cols + j] = fwd(a->value[bidx(bc.a, i, j)], b->value[bidx(bc.b, i, j)]);
  }
  return make(bc.out_shape, std::move(out), {a, b}, [bc, da, db](Node& self) {
    const NodePtr& pa = self.parents[0];
    const NodePtr& pb = self.parents[1];
    double* ga = grad_of(pa);
    double* gb = grad_of(pb);
    const auto& av = pa->value;
    const auto& bv = pb->value;
    for (std::size_t i = 0; i < bc.rows; ++i) {
      for (std::size_t j = 0; j < bc.cols; ++j) {
        const std::size_t o = i * bc.cols + j;
        const std::size_t ia = bc.same ? o : bidx(bc.a, i, j);
        const std::size_t ib = bc.same ? o : bidx(bc.b, i, j);
        const double g = self.grad[o];
        if (ga) ga[ia] += g * da(av[ia], bv[ib], self.value[o]);
        if (gb) gb[ib] += g * db(av[ia], bv[ib], self.value[o]);
      }
    }
  });
}

// f(x) elementwise with derivative d(x, y) where y = f(x).
template <class Fwd, class D>
Tensor unary(const Tensor& tx, Fwd fwd, D d) {
  const NodePtr& x = N(tx);
  std::vector<double> out(x->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x->value[i]);
  return make(x->shape, std::move(out), {x}, [d](Node& self) {
    const NodePtr& p = self.parents[0];
    double* gp = grad_of(p);
    for (std::size_t i = 0; i < self.value.size(); ++i)
      gp[i] += self.grad[i] * d(p->value[i], self.value[i]);
  });
}

void require_2d(const char* op, const Tensor& t) {
  if (t.rank() > 2)
    throw DimensionError(std::string(op) + ": expected rank <= 2, got " + shape_str(t.shape()));
}

}  // namespace

// ---- shape helpers ---------------------------------------------------------

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() = default;

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw DimensionError("Tensor::from: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t count = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(count, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t count = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(count, value));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::eye(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return from({n, n}, std::move(v));
}

Tensor Tensor::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return from({n, 1}, std::move(values));
}

const Shape& Tensor::shape() const { return N(*this)->shape; }
std::size_t Tensor::numel() const { return N(*this)->value.size(); }
std::size_t Tensor::rows() const { return N(*this)->rows(); }
std::size_t Tensor::cols() const { return N(*this)->cols(); }

std::span<const double> Tensor::data() const { return N(*this)->value; }
std::span<double> Tensor::mutable_data() { return N(*this)->value; }
std::vector<double> Tensor::to_vector() const { return N(*this)->value; }

double Tensor::item() const {
  const auto& v = N(*this)->value;
  if (v.size() != 1)
    throw ContractError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return v[0];
}

double Tensor::at(std::size_t i) const {
  const auto& v = N(*this)->value;
  if (i >= v.size()) throw ContractError("at: index out of range");
  return v[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const Node& n = *N(*this);
  if (r >= n.rows() || c >= n.cols()) throw ContractError("at: index out of range");
  return n.value[r * n.cols() + c];
}

bool Tensor::requires_grad() const { return N(*this)->requires_grad; }

bool Tensor::has_grad() const {
  const Node& n = *N(*this);
  return n.grad.size() == n.value.size() && !n.value.empty();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("grad: tensor has no gradient buffer");
  return N(*this)->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!has_grad()) throw ContractError("grad: tensor has no gradient buffer");
  return N(*this)->grad;
}

void Tensor::zero_grad() {
  Node& n = *N(*this);
  n.grad.assign(n.value.size(), 0.0);
}

void Tensor::backward() const {
  const NodePtr& root = N(*this);
  if (root->value.size() != 1)
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(root->shape));
  if (!root->requires_grad)
    throw ContractError("backward: loss does not depend on any parameter");

  // Iterative post-order DFS; parents are visited in recorded order.
  const std::uint64_t epoch = ++g_visit_epoch;
  std::vector<Node*> order;
  std::vector<std::pair<Node*, std::size_t>> stack;
  root->visit = epoch;
  stack.emplace_back(root.get(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && p->visit != epoch) {
        p->visit = epoch;
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads restart from zero on every pass; leaves accumulate.
  for (Node* n : order)
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

Tensor Tensor::detach() const {
  const Node& n = *N(*this);
  return from(n.shape, n.value, false);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& ta, const Tensor& tb) {
  require_2d("matmul", ta);
  require_2d("matmul", tb);
  const NodePtr& a = N(ta);
  const NodePtr& b = N(tb);
  const std::size_t m = a->rows(), k = a->cols(), k2 = b->rows(), n = b->cols();
  if (k != k2) throw DimensionError(shapes_msg("matmul", ta, tb));
  std::vector<double> out(m * n);
  kernels::gemm(a->value, b->value, out, m, k, n);
  return make({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const NodePtr& pa = self.parents[0];
    const NodePtr& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      kernels::gemm_nt(self.grad, pb->value, pa->grad, m, n, k, true);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      kernels::gemm_tn(pa->value, self.grad, pb->grad, k, m, n, true);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data())
    if (v == 0.0) throw DomainError("div: division by zero in tensor of shape " + shape_str(b.shape()));
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data())
    if (!(v > 0.0)) throw DomainError("log: nonpositive entry in tensor of shape " + shape_str(x.shape()));
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor neg(const Tensor& x) {
  return unary(
      x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.data())
    if (v < 0.0) throw DomainError("sqrt: negative entry in tensor of shape " + shape_str(x.shape()));
  return unary(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) {
        if (y == 0.0) throw DomainError("sqrt: gradient undefined at 0");
        return 0.5 / y;
      });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
}

Tensor clamp_min(const Tensor& x, double lo) {
  return unary(
      x, [lo](double v) { return v > lo ? v : lo; },
      [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor sum(const Tensor& tx) {
  const NodePtr& x = N(tx);
  double s = 0.0;
  for (double v : x->value) s += v;
  return make({}, {s}, {x}, [](Node& self) {
    const NodePtr& p = self.parents[0];
    double* gp = grad_of(p);
    const double g = self.grad[0];
    for (std::size_t i = 0; i < p->value.size(); ++i) gp[i] += g;
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum(const Tensor& tx, int axis) {
  require_2d("sum", tx);
  if (axis != 0 && axis != 1) throw DimensionError("sum: axis must be 0 or 1");
  const NodePtr& x = N(tx);
  const std::size_t r = x->rows(), c = x->cols();
  if (axis == 0) {
    std::vector<double> out(c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[j] += x->value[i * c + j];
    return make({1, c}, std::move(out), {x}, [r, c](Node& self) {
      double* gp = grad_of(self.parents[0]);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += self.grad[j];
    });
  }
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += x->value[i * c + j];
  return make({r, 1}, std::move(out), {x}, [r, c](Node& self) {
    double* gp = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += self.grad[i];
  });
}

Tensor mean(const Tensor& x, int axis) {
  const std::size_t count = axis == 0 ? x.rows() : x.cols();
  if (count == 0) throw DimensionError("mean: empty axis");
  return scale(sum(x, axis), 1.0 / static_cast<double>(count));
}

Tensor logsumexp(const Tensor& tx, int axis) {
  require_2d("logsumexp", tx);
  if (axis != 0 && axis != 1) throw DimensionError("logsumexp: axis must be 0 or 1");
  const NodePtr& x = N(tx);
  const std::size_t r = x->rows(), c = x->cols();
  const std::size_t outer = axis == 1 ? r : c;
  const std::size_t inner = axis == 1 ? c : r;
  auto at = [r, c, axis](std::size_t o, std::size_t q) {
    (void)r;
    return axis == 1 ? o * c + q : q * c + o;
  };
  std::vector<double> out(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < inner; ++q) mx = std::max(mx, x->value[at(o, q)]);
    double s = 0.0;
    for (std::size_t q = 0; q < inner; ++q) s += std::exp(x->value[at(o, q)] - mx);
    out[o] = mx + std::log(s);
  }
  Shape shape = axis == 1 ? Shape{r, 1} : Shape{1, c};
  return make(shape, std::move(out), {x}, [outer, inner, at](Node& self) {
    const NodePtr& p = self.parents[0];
    double* gp = grad_of(p);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t q = 0; q < inner; ++q) {
        const std::size_t idx = at(o, q);
        gp[idx] += self.grad[o] * std::exp(p->value[idx] - self.value[o]);
      }
  });
}

Tensor softmax_rows(const Tensor& tx) {
  require_2d("softmax_rows", tx);
  const NodePtr& x = N(tx);
  const std::size_t r = x->rows(), c = x->cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x->value.data() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (out[i * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= s;
  }
  return make(x->shape, std::move(out), {x}, [r, c](Node& self) {
    double* gp = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.value.data() + i * c;
      const double* g = self.grad.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor transpose(const Tensor& tx) {
  require_2d("transpose", tx);
  const NodePtr& x = N(tx);
  const std::size_t r = x->rows(), c = x->cols();
  std::vector<double> out(r * c);
  kernels::transpose(x->value, out, r, c);
  return make({c, r}, std::move(out), {x}, [r, c](Node& self) {
    double* gp = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& tx, Shape shape) {
  const NodePtr& x = N(tx);
  if (shape_numel(shape) != x->value.size())
    throw DimensionError("reshape: cannot view " + shape_str(x->shape) + " as " + shape_str(shape));
  return make(std::move(shape), x->value, {x}, [](Node& self) {
    double* gp = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gp[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis != 0 && axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  std::vector<NodePtr> nodes;
  for (const auto& t : parts) {
    require_2d("concat", t);
    nodes.push_back(N(t));
  }
  const std::size_t r0 = nodes[0]->rows(), c0 = nodes[0]->cols();
  std::size_t total = 0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const std::size_t r = nodes[k]->rows(), c = nodes[k]->cols();
    if ((axis == 0 && c != c0) || (axis == 1 && r != r0))
      throw DimensionError(shapes_msg("concat", parts[0], parts[k]));
    total += axis == 0 ? r : c;
  }
  std::vector<std::size_t> offsets;
  std::vector<double> out;
  Shape shape;
  if (axis == 0) {
    shape = {total, c0};
    out.reserve(total * c0);
    for (const auto& n : nodes) {
      offsets.push_back(out.size());
      out.insert(out.end(), n->value.begin(), n->value.end());
    }
    return make(shape, std::move(out), nodes, [offsets](Node& self) {
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        double* gp = grad_of(self.parents[k]);
        if (!gp) continue;
        const std::size_t len = self.parents[k]->value.size();
        for (std::size_t i = 0; i < len; ++i) gp[i] += self.grad[offsets[k] + i];
      }
    });
  }
  shape = {r0, total};
  out.assign(r0 * total, 0.0);
  std::size_t off = 0;
  for (const auto& n : nodes) {
    offsets.push_back(off);
    const std::size_t c = n->cols();
    for (std::size_t i = 0; i < r0; ++i)
      std::copy_n(n->value.begin() + static_cast<std::ptrdiff_t>(i * c), c,
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + off));
    off += c;
  }
  return make(shape, std::move(out), nodes, [offsets, r0, total](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      double* gp = grad_of(self.parents[k]);
      if (!gp) continue;
      const std::size_t c = self.parents[k]->cols();
      for (std::size_t i = 0; i < r0; ++i)
        for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += self.grad[i * total + offsets[k] + j];
    }
  });
}

Tensor gather_rows(const Tensor& tx, std::span<const std::size_t> rows) {
  require_2d("gather_rows", tx);
  const NodePtr& x = N(tx);
  const std::size_t r = x->rows(), c = x->cols();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  for (std::size_t i : idx)
    if (i >= r)
      throw DimensionError("gather_rows: row " + std::to_string(i) + " out of range for " +
                           shape_str(x->shape));
  std::vector<double> out(idx.size() * c);
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy_n(x->value.begin() + static_cast<std::ptrdiff_t>(idx[k] * c), c,
                out.begin() + static_cast<std::ptrdiff_t>(k * c));
  return make({idx.size(), c}, std::move(out), {x}, [idx, c](Node& self) {
    double* gp = grad_of(self.parents[0]);
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) gp[idx[k] * c + j] += self.grad[k * c + j];
  });
}

Tensor slice_cols(const Tensor& tx, std::size_t start, std::size_t count) {
  require_2d("slice_cols", tx);
  const NodePtr& x = N(tx);
  const std::size_t r = x->rows(), c = x->cols();
  if (start + count > c)
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " + shape_str(x->shape));
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x->value[i * c + start + j];
  return make({r, count}, std::move(out), {x}, [r, c, start, count](Node& self) {
    double* gp = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) gp[i * c + start + j] += self.grad[i * count + j];
  });
}

Tensor slice_rows(const Tensor& tx, std::size_t start, std::size_t count) {
  require_2d("slice_rows", tx);
  const NodePtr& x = N(tx);
  const std::size_t r = x->rows(), c = x->cols();
  if (start + count > r)
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " + shape_str(x->shape));
  std::vector<double> out(x->value.begin() + static_cast<std::ptrdiff_t>(start * c),
                          x->value.begin() + static_cast<std::ptrdiff_t>((start + count) * c));
  return make({count, c}, std::move(out), {x}, [c, start](Node& self) {
    double* gp = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gp[start * c + i] += self.grad[i];
  });
}

Tensor l2_normalize(const Tensor& tx, double eps) {
  const NodePtr& x = N(tx);
  double ss = 0.0;
  for (double v : x->value) ss += v * v;
  const double norm = std::sqrt(ss + eps);
  std::vector<double> out(x->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] / norm;
  return make(x->shape, std::move(out), {x}, [norm](Node& self) {
    double* gp = grad_of(self.parents[0]);
    double dot = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) dot += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < self.value.size(); ++i)
      gp[i] += (self.grad[i] - self.value[i] * dot) / norm;
  });
}

Tensor straight_through(const Tensor& thard, const Tensor& trelaxed) {
  const NodePtr& hard = N(thard);
  const NodePtr& relaxed = N(trelaxed);
  if (hard->shape != relaxed->shape)
    throw DimensionError(shapes_msg("straight_through", thard, trelaxed));
  return make(hard->shape, hard->value, {relaxed}, [](Node& self) {
    double* gp = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gp[i] += self.grad[i];
  });
}

}  // namespace lps
