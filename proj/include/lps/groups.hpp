#pragma once

// Group representations, their actions on graphs and point clouds, and the
// postprocessors that turn network features into valid group elements.

#include <cstddef>
#include <vector>

#include "lps/rng.hpp"
#include "lps/tensor.hpp"

namespace lps {

// perm[j] is the source index that lands at target position j. The induced
// matrix has P[perm[j], j] = 1, so P^T x gathers x[perm[j]] into row j and
// P x scatters row j of x to row perm[j].
struct Permutation {
  std::vector<std::size_t> perm;

  static Permutation identity(std::size_t n);
  std::size_t size() const { return perm.size(); }
  bool is_bijection() const;
  Tensor matrix() const;
  Permutation inverse() const;
  // Matrix product this * other.
  Permutation compose(const Permutation& other) const;
  bool operator==(const Permutation& o) const { return perm == o.perm; }
};

struct OrthogonalRep {
  Tensor matrix;
  bool special = false;
};

struct EuclideanRep {
  OrthogonalRep rotation;
  std::vector<double> translation;
};

struct ProductRep {
  Permutation perm;
  OrthogonalRep rot;
};

struct Graph {
  std::size_t n = 0;
  Tensor adjacency;      // n x n, symmetric 0/1, zero diagonal
  Tensor node_features;  // n x c

  // Builds a graph from a row-major 0/1 adjacency; features default to ones.
  static Graph from_adjacency(std::size_t n, const std::vector<int>& adj);
  static Graph from_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);
  void validate() const;
  std::size_t edge_count() const;
  bool has_edge(std::size_t i, std::size_t j) const { return adjacency.at(i, j) != 0.0; }
};

struct PointCloudState {
  Tensor positions;   // n x d
  Tensor velocities;  // n x d
  Tensor charges;     // n x 1

  std::size_t n() const { return positions.rows(); }
  void validate() const;
};

// ---- actions ----------------------------------------------------------------

// P A P^T and P X.
Graph act_graph(const Permutation& p, const Graph& g);
// Row action P X and the inverse row action P^T X on n x c data.
Tensor permute_rows(const Permutation& p, const Tensor& x);
Tensor unpermute_rows(const Permutation& p, const Tensor& x);
// Rotation acting on point rows: X Q^T.
Tensor rotate_rows(const Tensor& q, const Tensor& x);
// Positions and velocities to P X Q^T, charges to P c.
PointCloudState product_act(const ProductRep& r, const PointCloudState& s);
// Positions to X Q^T + 1 t^T, velocities to V Q^T.
PointCloudState euclidean_act(const EuclideanRep& e, const PointCloudState& s);
ProductRep compose(const ProductRep& a, const ProductRep& b);

// ---- postprocessors ---------------------------------------------------------

struct ArgsortResult {
  Permutation perm;
  std::size_t ties = 0;  // number of adjacent equal pairs in the sorted order
};

// Ascending stable argsort as a permutation: P = eq(z 1^T, 1 sort(z)^T).
ArgsortResult hard_argsort(const Tensor& z);

// exp followed by `iters` alternating row and column normalizations, carried
// out in the log domain.
Tensor sinkhorn(const Tensor& logits, int iters = 20);

// S(-|zbar 1^T - 1 sort(zbar)^T| / tau) with zbar = z / |z|.
Tensor relaxed_argsort(const Tensor& z, double tau, int iters = 20);

// Forward equals the hard permutation matrix, gradient flows to `relaxed`.
Tensor straight_through(const Permutation& hard, const Tensor& relaxed);

// Modified Gram-Schmidt over the columns of a d x d matrix.
Tensor gram_schmidt(const Tensor& z);

// Multiplies the first column by det(Q), giving determinant +1.
Tensor scale_det(const Tensor& q);

struct Centered {
  Tensor centered;  // n x d
  Tensor centroid;  // 1 x d
};
Centered center(const Tensor& x);

// Haar-distributed orthogonal matrix (special orthogonal when `special`).
Tensor haar_orthogonal(std::size_t d, Rng& rng, bool special);
Permutation uniform_permutation(std::size_t n, Rng& rng);

// Determinant by partial-pivot LU on plain doubles.
double determinant(std::span<const double> m, std::size_t d);

}  // namespace lps
