#include "lps/groups.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lps/errors.hpp"

namespace lps {

// ---- Permutation -------------------------------------------------------------

Permutation Permutation::identity(std::size_t n) {
  Permutation p;
  p.perm.resize(n);
  std::iota(p.perm.begin(), p.perm.end(), std::size_t{0});
  return p;
}

bool Permutation::is_bijection() const {
  std::vector<char> seen(perm.size(), 0);
  for (std::size_t s : perm) {
    if (s >= perm.size() || seen[s]) return false;
    seen[s] = 1;
  }
  return true;
}

Tensor Permutation::matrix() const {
  const std::size_t n = perm.size();
  std::vector<double> m(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) m[perm[j] * n + j] = 1.0;
  return Tensor::from({n, n}, std::move(m));
}

Permutation Permutation::inverse() const {
  Permutation inv;
  inv.perm.resize(perm.size());
  for (std::size_t j = 0; j < perm.size(); ++j) inv.perm[perm[j]] = j;
  return inv;
}

Permutation Permutation::compose(const Permutation& other) const {
  if (other.size() != size()) throw ContractError("compose: permutation sizes differ");
  Permutation out;
  out.perm.resize(size());
  for (std::size_t j = 0; j < size(); ++j) out.perm[j] = perm[other.perm[j]];
  return out;
}

// ---- Graph / PointCloudState --------------------------------------------------

Graph Graph::from_adjacency(std::size_t n, const std::vector<int>& adj) {
  if (adj.size() != n * n) throw ContractError("from_adjacency: expected n*n entries");
  std::vector<double> a(adj.begin(), adj.end());
  Graph g;
  g.n = n;
  g.adjacency = Tensor::from({n, n}, std::move(a));
  g.node_features = Tensor::full({n, 1}, 1.0);
  g.validate();
  return g;
}

Graph Graph::from_edges(std::size_t n,
                        const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<int> adj(n * n, 0);
  for (auto [i, j] : edges) {
    if (i >= n || j >= n || i == j) throw ContractError("from_edges: invalid edge");
    adj[i * n + j] = adj[j * n + i] = 1;
  }
  return from_adjacency(n, adj);
}

void Graph::validate() const {
  if (n < 1) throw ContractError("graph must have at least one node");
  if (adjacency.shape() != Shape{n, n})
    throw ContractError("graph adjacency has shape " + shape_str(adjacency.shape()));
  if (node_features.rows() != n || node_features.rank() != 2)
    throw ContractError("graph features have shape " + shape_str(node_features.shape()));
  for (std::size_t i = 0; i < n; ++i) {
    if (adjacency.at(i, i) != 0.0) throw ContractError("graph adjacency has a self loop");
    for (std::size_t j = 0; j < n; ++j) {
      const double v = adjacency.at(i, j);
      if ((v != 0.0 && v != 1.0) || v != adjacency.at(j, i))
        throw ContractError("graph adjacency must be symmetric and binary");
    }
  }
}

std::size_t Graph::edge_count() const {
  std::size_t e = 0;
  for (double v : adjacency.data()) e += v != 0.0;
  return e / 2;
}

void PointCloudState::validate() const {
  const std::size_t n = positions.rows();
  if (positions.rank() != 2 || velocities.shape() != positions.shape())
    throw ContractError("point cloud positions and velocities must share an n x d shape");
  if (charges.numel() != n) throw ContractError("point cloud needs one charge per point");
  for (double v : positions.data())
    if (!std::isfinite(v)) throw ContractError("point cloud positions must be finite");
  for (double v : velocities.data())
    if (!std::isfinite(v)) throw ContractError("point cloud velocities must be finite");
}

// ---- actions ------------------------------------------------------------------

Tensor permute_rows(const Permutation& p, const Tensor& x) {
  if (x.rows() != p.size())
    throw ContractError("permute_rows: permutation of size " + std::to_string(p.size()) +
                        " cannot act on " + shape_str(x.shape()));
  return gather_rows(x, p.inverse().perm);
}

Tensor unpermute_rows(const Permutation& p, const Tensor& x) {
  if (x.rows() != p.size())
    throw ContractError("unpermute_rows: permutation of size " + std::to_string(p.size()) +
                        " cannot act on " + shape_str(x.shape()));
  return gather_rows(x, p.perm);
}

Graph act_graph(const Permutation& p, const Graph& g) {
  if (p.size() != g.n)
    throw ContractError("act_graph: permutation of size " + std::to_string(p.size()) +
                        " cannot act on a graph with " + std::to_string(g.n) + " nodes");
  Graph out;
  out.n = g.n;
  out.adjacency = transpose(permute_rows(p, transpose(permute_rows(p, g.adjacency))));
  out.node_features = permute_rows(p, g.node_features);
  return out;
}

Tensor rotate_rows(const Tensor& q, const Tensor& x) {
  if (q.rows() != q.cols() || x.cols() != q.rows())
    throw ContractError("rotate_rows: cannot apply " + shape_str(q.shape()) + " to rows of " +
                        shape_str(x.shape()));
  return matmul(x, transpose(q));
}

PointCloudState product_act(const ProductRep& r, const PointCloudState& s) {
  if (r.perm.size() != s.n())
    throw ContractError("product_act: permutation size does not match point count");
  PointCloudState out;
  out.positions = rotate_rows(r.rot.matrix, permute_rows(r.perm, s.positions));
  out.velocities = rotate_rows(r.rot.matrix, permute_rows(r.perm, s.velocities));
  out.charges = permute_rows(r.perm, reshape(s.charges, {s.n(), 1}));
  return out;
}

PointCloudState euclidean_act(const EuclideanRep& e, const PointCloudState& s) {
  const std::size_t d = e.rotation.matrix.rows();
  if (e.translation.size() != d) throw ContractError("euclidean_act: translation size mismatch");
  PointCloudState out;
  out.positions = rotate_rows(e.rotation.matrix, s.positions) + Tensor::from({1, d}, e.translation);
  out.velocities = rotate_rows(e.rotation.matrix, s.velocities);
  out.charges = s.charges;
  return out;
}

ProductRep compose(const ProductRep& a, const ProductRep& b) {
  ProductRep out;
  out.perm = a.perm.compose(b.perm);
  out.rot.matrix = matmul(a.rot.matrix, b.rot.matrix);
  out.rot.special = a.rot.special && b.rot.special;
  return out;
}

// ---- postprocessors ---------------------------------------------------------

ArgsortResult hard_argsort(const Tensor& z) {
  auto v = z.data();
  ArgsortResult r;
  r.perm = Permutation::identity(v.size());
  std::stable_sort(r.perm.perm.begin(), r.perm.perm.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[r.perm.perm[j]] == v[r.perm.perm[j - 1]]) ++r.ties;
  return r;
}

Tensor sinkhorn(const Tensor& logits, int iters) {
  if (logits.rank() != 2 || logits.rows() != logits.cols())
    throw DimensionError("sinkhorn: expected a square matrix, got " + shape_str(logits.shape()));
  if (iters < 1) throw ContractError("sinkhorn: iters must be at least 1");
  for (double v : logits.data())
    if (!std::isfinite(v)) throw DomainError("sinkhorn: non-finite logits");
  Tensor l = logits;
  for (int t = 0; t < iters; ++t) {
    l = l - logsumexp(l, 1);
    l = l - logsumexp(l, 0);
  }
  return exp(l);
}

Tensor relaxed_argsort(const Tensor& z, double tau, int iters) {
  if (!(tau > 0.0)) throw ContractError("relaxed_argsort: tau must be positive");
  const std::size_t n = z.numel();
  const Tensor zc = reshape(z, {n, 1});
  const Tensor zbar = l2_normalize(zc);
  const auto order = hard_argsort(z).perm.perm;
  const Tensor sorted = transpose(gather_rows(zbar, order));
  const Tensor cost = scale(abs(zbar - sorted), -1.0 / tau);
  return sinkhorn(cost, iters);
}

Tensor straight_through(const Permutation& hard, const Tensor& relaxed) {
  return lps::straight_through(hard.matrix(), relaxed);
}

Tensor gram_schmidt(const Tensor& z) {
  if (z.rank() != 2 || z.rows() != z.cols())
    throw DimensionError("gram_schmidt: expected a square matrix, got " + shape_str(z.shape()));
  const std::size_t d = z.cols();
  std::vector<Tensor> q;
  q.reserve(d);
  for (std::size_t k = 0; k < d; ++k) {
    Tensor v = slice_cols(z, k, 1);
    for (std::size_t j = 0; j < k; ++j) v = v - q[j] * sum(q[j] * v);
    const Tensor norm = sqrt(sum(v * v));
    if (norm.item() < 1e-10)
      throw DegenerateInputError("gram_schmidt: column " + std::to_string(k) +
                                 " is linearly dependent on the previous ones");
    q.push_back(v / norm);
  }
  return concat(q, 1);
}

double determinant(std::span<const double> m, std::size_t d) {
  std::vector<double> a(m.begin(), m.end());
  double det = 1.0;
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < d; ++r)
      if (std::fabs(a[r * d + c]) > std::fabs(a[piv * d + c])) piv = r;
    if (a[piv * d + c] == 0.0) return 0.0;
    if (piv != c) {
      for (std::size_t j = 0; j < d; ++j) std::swap(a[c * d + j], a[piv * d + j]);
      det = -det;
    }
    det *= a[c * d + c];
    for (std::size_t r = c + 1; r < d; ++r) {
      const double f = a[r * d + c] / a[c * d + c];
      for (std::size_t j = c; j < d; ++j) a[r * d + j] -= f * a[c * d + j];
    }
  }
  return det;
}

Tensor scale_det(const Tensor& q) {
  if (q.rank() != 2 || q.rows() != q.cols())
    throw DimensionError("scale_det: expected a square matrix, got " + shape_str(q.shape()));
  const std::size_t d = q.cols();
  const double sign = determinant(q.data(), d) < 0.0 ? -1.0 : 1.0;
  std::vector<double> col(d, 1.0);
  col[0] = sign;
  return q * Tensor::from({1, d}, std::move(col));
}

Centered center(const Tensor& x) {
  if (x.rank() != 2 || x.rows() < 1) throw ContractError("center: expected an n x d matrix");
  Centered c;
  c.centroid = mean(x, 0);
  c.centered = x - c.centroid;
  return c;
}

Tensor haar_orthogonal(std::size_t d, Rng& rng, bool special) {
  if (d < 1) throw ContractError("haar_orthogonal: d must be at least 1");
  // Householder QR of a Gaussian matrix; Q is accumulated explicitly.
  std::vector<double> a = rng.normals(d * d);
  std::vector<double> qm(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) qm[i * d + i] = 1.0;
  std::vector<double> v(d);
  for (std::size_t k = 0; k + 1 < d; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < d; ++i) norm += a[i * d + k] * a[i * d + k];
    norm = std::sqrt(norm);
    const double alpha = a[k * d + k] > 0 ? -norm : norm;
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t i = k; i < d; ++i) v[i] = a[i * d + k];
    v[k] -= alpha;
    double vv = 0.0;
    for (std::size_t i = k; i < d; ++i) vv += v[i] * v[i];
    if (vv == 0.0) continue;
    // A <- H A, Q <- Q H with H = I - 2 v v^T / (v^T v).
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < d; ++i) s += v[i] * a[i * d + j];
      s *= 2.0 / vv;
      for (std::size_t i = k; i < d; ++i) a[i * d + j] -= s * v[i];
    }
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t r = k; r < d; ++r) s += qm[i * d + r] * v[r];
      s *= 2.0 / vv;
      for (std::size_t r = k; r < d; ++r) qm[i * d + r] -= s * v[r];
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (a[j * d + j] < 0.0)
      for (std::size_t i = 0; i < d; ++i) qm[i * d + j] = -qm[i * d + j];
  }
  Tensor q = Tensor::from({d, d}, std::move(qm));
  return special ? scale_det(q) : q;
}

Permutation uniform_permutation(std::size_t n, Rng& rng) {
  if (n < 1) throw ContractError("uniform_permutation: n must be at least 1");
  Permutation p = Permutation::identity(n);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(p.perm[i], p.perm[rng.index(i + 1)]);
  return p;
}

}  // namespace lps
