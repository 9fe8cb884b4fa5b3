#pragma once

// Independent brute-force references. Nothing here calls the tensor engine or
// the blocked kernels; matrices are plain nested loops over std::vector.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lps {
class GraphSymModel;
struct Graph;
class Rng;
}  // namespace lps

namespace lps::oracle {

// ---- calculus ----------------------------------------------------------------

// Central differences, one coordinate at a time.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double h = 1e-5);

// ||a - b|| / max(||b||, floor).
double relative_error(const std::vector<double>& a, const std::vector<double>& b,
                      double floor = 1e-8);

// ---- dense matrices (row-major, plain loops) --------------------------------------

using Mat = std::vector<double>;
Mat matmul(const Mat& a, const Mat& b, std::size_t m, std::size_t k, std::size_t n);
Mat transpose(const Mat& a, std::size_t rows, std::size_t cols);
// Frobenius norm of Q^T Q - I.
double orthogonality_residual(const Mat& q, std::size_t d);
// Determinant by cofactor expansion (d <= 6).
double det(const Mat& a, std::size_t d);
double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b);

// ---- graphs ----------------------------------------------------------------------

struct PlainGraph {
  std::size_t n = 0;
  std::vector<int> adj;           // n x n, 0/1
  std::vector<double> features;   // n x channels
  std::size_t channels = 1;

  static PlainGraph from(const Graph& g);
  bool edge(std::size_t i, std::size_t j) const { return adj[i * n + j] != 0; }
};

// Permutation in target -> source form: (g^-1 x)[j] = x[perm[j]].
using Perm = std::vector<std::size_t>;
PlainGraph inverse_act(const Perm& perm, const PlainGraph& g);
PlainGraph act(const Perm& perm, const PlainGraph& g);

// (1/n!) sum_g g . f(g^-1 . x). `node_channels` = 0 marks an invariant output;
// otherwise f returns n x node_channels rows that the output action permutes.
std::vector<double> exact_group_average(const std::function<std::vector<double>(const PlainGraph&)>& f,
                                        const PlainGraph& x, std::size_t node_channels,
                                        std::size_t n_max = 5);

struct WlColoring {
  std::vector<std::size_t> colors;
  std::size_t rounds = 0;
};

// 1-WL refinement; colors are canonical ranks of refinement signatures, so
// isomorphic graphs receive identical colorings up to node order.
WlColoring wl1_colors(const PlainGraph& g);
// Whether 1-WL fails to distinguish g1 and g2 (refinement on the disjoint union).
bool wl1_equivalent(const PlainGraph& g1, const PlainGraph& g2);

// Backtracking isomorphism test over degree-compatible assignments.
bool isomorphic_bruteforce(const PlainGraph& g1, const PlainGraph& g2, std::size_t n_max = 8);

// Lexicographically smallest upper-triangle adjacency bit string over all n! relabelings.
std::string canonical_form(const PlainGraph& g, std::size_t n_max = 8);

bool is_connected(const PlainGraph& g);

// All automorphisms (as target -> source permutations).
std::vector<Perm> automorphisms(const PlainGraph& g, std::size_t n_max = 10);
// Node orbits under the automorphism group; each orbit sorted, orbits by smallest member.
std::vector<std::vector<std::size_t>> automorphism_orbits(const PlainGraph& g, std::size_t n_max = 10);

// Worst absolute gap between per-node outputs (n x c) within each nontrivial
// orbit; empty when every orbit is a single node.
std::optional<double> orbit_gap(const PlainGraph& g, const std::vector<double>& outputs, std::size_t c);

// Mean per-node model outputs over n_samples draws, compared across orbits.
std::optional<double> automorphism_consistency(const GraphSymModel& model, const Graph& g,
                                               std::size_t n_samples, Rng& rng);

}  // namespace lps::oracle
