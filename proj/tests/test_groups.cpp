#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "lps/errors.hpp"
#include "lps/groups.hpp"
#include "lps/oracles.hpp"
#include "lps/symmetrization.hpp"

using namespace lps;

namespace {

double max_abs(const Tensor& a, const Tensor& b) { return oracle::max_abs_diff(a.to_vector(), b.to_vector()); }

std::vector<double> degrees(const Graph& g) {
  std::vector<double> d(g.n, 0.0);
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.n; ++j) d[i] += g.adjacency.at(i, j);
  std::sort(d.begin(), d.end());
  return d;
}

}  // namespace

TEST_CASE("identity permutation leaves a graph unchanged") {
  const Graph g = Graph::from_edges(4, {{0, 1}, {1, 2}, {2, 0}, {2, 3}});
  const Graph h = act_graph(Permutation::identity(4), g);
  CHECK(h.adjacency.to_vector() == g.adjacency.to_vector());
  CHECK(h.node_features.to_vector() == g.node_features.to_vector());
}

TEST_CASE("swapping the ends of a 2-path swaps features") {
  Graph g = Graph::from_edges(2, {{0, 1}});
  g.node_features = Tensor::from({2, 1}, {3.0, 7.0});
  const Graph h = act_graph(Permutation{{1, 0}}, g);
  CHECK(h.node_features.to_vector() == std::vector<double>{7.0, 3.0});
  CHECK(h.adjacency.to_vector() == g.adjacency.to_vector());
}

TEST_CASE("relabeling a triangle with a pendant keeps the degree multiset") {
  const Graph g = Graph::from_edges(4, {{0, 1}, {1, 2}, {2, 0}, {2, 3}});
  for (const auto& e : enumerate_sn(4)) CHECK(degrees(act_graph(*e.perm, g)) == degrees(g));
}

TEST_CASE("graph validation rejects malformed input") {
  CHECK_THROWS_AS(Graph::from_adjacency(2, {0, 1, 0, 0}), ContractError);
  CHECK_THROWS_AS(Graph::from_adjacency(2, {1, 0, 0, 0}), ContractError);
  CHECK_THROWS_AS(Graph::from_adjacency(2, {0, 1, 1}), ContractError);
  CHECK_THROWS_AS(Graph::from_edges(3, {{0, 5}}), ContractError);
}

TEST_CASE("hard argsort on a small vector") {
  const auto r = hard_argsort(Tensor::from({3, 1}, {2, 0, 1}));
  const std::vector<double> expected{0, 0, 1, 1, 0, 0, 0, 1, 0};
  CHECK(r.perm.matrix().to_vector() == expected);
  CHECK(r.ties == 0);
  CHECK(hard_argsort(Tensor::from({4, 1}, {-1, 0, 2, 5})).perm.perm == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(hard_argsort(Tensor::from({3, 1}, {1, 1, 0})).ties == 1);
}

TEST_CASE("hard argsort is permutation equivariant") {
  Rng rng(1);
  const Tensor z = Tensor::from({4, 1}, rng.normals(4));
  const Tensor p = hard_argsort(z).perm.matrix();
  for (const auto& e : enumerate_sn(4)) {
    const Tensor moved = hard_argsort(permute_rows(*e.perm, z)).perm.matrix();
    CHECK(moved.to_vector() == matmul(e.perm_matrix, p).to_vector());
  }
}

TEST_CASE("sinkhorn examples") {
  const Tensor half = sinkhorn(Tensor::zeros({2, 2}), 20);
  for (double v : half.to_vector()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = 3 + static_cast<std::size_t>(k % 8);
    const Tensor p = sinkhorn(Tensor::from({n, n}, rng.normals(n * n)), 20);
    for (std::size_t i = 0; i < n; ++i) {
      double rs = 0, cs = 0;
      for (std::size_t j = 0; j < n; ++j) {
        rs += p.at(i, j);
        cs += p.at(j, i);
      }
      CHECK(std::abs(rs - 1) <= 1e-4);
      CHECK(std::abs(cs - 1) <= 1e-4);
    }
  }
  const Tensor z = Tensor::from({4, 1}, {0.3, -1.2, 2.0, 0.9});
  const Permutation hard = hard_argsort(z).perm;
  std::vector<double> logits(16, 0.0);
  for (std::size_t j = 0; j < 4; ++j) logits[hard.perm[j] * 4 + j] = 1.0 / 0.01;
  CHECK(max_abs(sinkhorn(Tensor::from({4, 4}, logits), 20), hard.matrix()) <= 1e-2);
}

TEST_CASE("sinkhorn on widely spread logits needs more iterations") {
  Rng rng(12);
  const Tensor logits = Tensor::from({2, 2}, {2.5, -2.5, -2.5, 2.5});
  auto row_gap = [](const Tensor& p) { return std::abs(p.at(0, 0) + p.at(0, 1) - 1.0); };
  const double short_run = row_gap(sinkhorn(logits, 20));
  const double long_run = row_gap(sinkhorn(logits, 400));
  CHECK(long_run <= 1e-10);
  CHECK(long_run <= short_run);
  const Tensor wide = Tensor::from({6, 6}, rng.normals(36, 3.0));
  const Tensor p = sinkhorn(wide, 400);
  for (std::size_t i = 0; i < 6; ++i) {
    double rs = 0;
    for (std::size_t j = 0; j < 6; ++j) rs += p.at(i, j);
    CHECK(std::abs(rs - 1) <= 1e-8);
  }
}

TEST_CASE("relaxed argsort approaches the hard sort and flattens on ties") {
  const Tensor z = Tensor::from({3, 1}, {2, 0, 1});
  CHECK(max_abs(relaxed_argsort(z, 0.01, 20), hard_argsort(z).perm.matrix()) <= 1e-2);
  const Tensor flat = relaxed_argsort(Tensor::full({4, 1}, 1.5), 0.01, 20);
  for (double v : flat.to_vector()) CHECK(v == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("straight-through forward is the hard matrix and gradients follow the relaxed path") {
  const Permutation hard{{1, 0}};
  Tensor logits = Tensor::from({2, 2}, {0.2, -0.4, 1.0, 0.3}, true);
  const Tensor relaxed = sinkhorn(logits, 20);
  const Tensor st = straight_through(hard, relaxed);
  CHECK(st.to_vector() == std::vector<double>{0, 1, 1, 0});

  const Tensor w = Tensor::from({2, 2}, {1.0, 2.0, -1.0, 0.5});
  sum(st * w).backward();
  const std::vector<double> via_st(logits.grad().begin(), logits.grad().end());
  logits.zero_grad();
  sum(sinkhorn(logits, 20) * w).backward();
  const std::vector<double> via_relaxed(logits.grad().begin(), logits.grad().end());
  CHECK(oracle::max_abs_diff(via_st, via_relaxed) <= 1e-15);
  double mag = 0;
  for (double g : via_st) mag += std::abs(g);
  CHECK(mag > 0.0);
}

TEST_CASE("gram-schmidt examples") {
  CHECK(max_abs(gram_schmidt(Tensor::eye(3)), Tensor::eye(3)) <= 1e-15);
  CHECK(max_abs(gram_schmidt(Tensor::from({2, 2}, {2, 0, 0, 3})), Tensor::eye(2)) <= 1e-15);
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const Tensor z = Tensor::from({3, 3}, rng.normals(9));
    const Tensor r = haar_orthogonal(3, rng, false);
    CHECK(max_abs(gram_schmidt(matmul(r, z)), matmul(r, gram_schmidt(z))) <= 1e-6);
    CHECK(oracle::orthogonality_residual(gram_schmidt(z).to_vector(), 3) <= 1e-6);
  }
  CHECK_THROWS_AS(gram_schmidt(Tensor::from({2, 2}, {1, 2, 1, 2})), DegenerateInputError);
}

TEST_CASE("scale_det examples") {
  CHECK(max_abs(scale_det(Tensor::eye(3)), Tensor::eye(3)) <= 1e-15);
  CHECK(scale_det(Tensor::from({2, 2}, {1, 0, 0, -1})).to_vector() == std::vector<double>{-1, 0, 0, -1});
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    Tensor q = haar_orthogonal(3, rng, false);
    if (oracle::det(q.to_vector(), 3) > 0) q = matmul(q, Tensor::from({3, 3}, {-1, 0, 0, 0, 1, 0, 0, 0, 1}));
    CHECK(std::abs(oracle::det(scale_det(q).to_vector(), 3) - 1.0) <= 1e-6);
  }
}

TEST_CASE("center examples") {
  const auto a = center(Tensor::from({2, 2}, {1, 0, -1, 0}));
  CHECK(a.centroid.to_vector() == std::vector<double>{0, 0});
  CHECK(a.centered.to_vector() == std::vector<double>{1, 0, -1, 0});
  const auto b = center(Tensor::from({2, 2}, {2, 2, 4, 4}));
  CHECK(b.centroid.to_vector() == std::vector<double>{3, 3});
  CHECK(b.centered.to_vector() == std::vector<double>{-1, -1, 1, 1});
  Rng rng(5);
  const Tensor x = Tensor::from({5, 3}, rng.normals(15));
  const auto t = rng.normals(3);
  const auto c0 = center(x);
  const auto c1 = center(x + Tensor::from({1, 3}, t));
  CHECK(max_abs(c0.centered, c1.centered) <= 1e-12);
  for (std::size_t a2 = 0; a2 < 3; ++a2) CHECK(c1.centroid.at(a2) - c0.centroid.at(a2) == doctest::Approx(t[a2]).epsilon(1e-12));
}

TEST_CASE("product action") {
  Rng rng(6);
  PointCloudState s;
  s.positions = Tensor::from({4, 3}, rng.normals(12));
  s.velocities = Tensor::from({4, 3}, rng.normals(12));
  s.charges = Tensor::from({4, 1}, {1, -1, 1, -1});
  const ProductRep id{Permutation::identity(4), OrthogonalRep{Tensor::eye(3), true}};
  CHECK(product_act(id, s).positions.to_vector() == s.positions.to_vector());

  const ProductRep rot{Permutation::identity(4), OrthogonalRep{haar_orthogonal(3, rng, false), false}};
  const auto moved = product_act(rot, s);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double d0 = 0, d1 = 0;
      for (std::size_t a = 0; a < 3; ++a) {
        d0 += std::pow(s.positions.at(i, a) - s.positions.at(j, a), 2);
        d1 += std::pow(moved.positions.at(i, a) - moved.positions.at(j, a), 2);
      }
      CHECK(std::abs(d0 - d1) <= 1e-10);
    }

  for (int k = 0; k < 10; ++k) {
    const ProductRep r1{uniform_permutation(4, rng), OrthogonalRep{haar_orthogonal(3, rng, false), false}};
    const ProductRep r2{uniform_permutation(4, rng), OrthogonalRep{haar_orthogonal(3, rng, false), false}};
    const auto two_step = product_act(r2, product_act(r1, s));
    const auto one_step = product_act(compose(r2, r1), s);
    CHECK(max_abs(two_step.positions, one_step.positions) <= 1e-10);
    CHECK(max_abs(two_step.velocities, one_step.velocities) <= 1e-10);
    CHECK(two_step.charges.to_vector() == one_step.charges.to_vector());
  }
}

TEST_CASE("haar orthogonal samples") {
  Rng rng(7);
  std::vector<double> mean(9, 0.0);
  const int count = 10000;
  for (int k = 0; k < count; ++k) {
    const Tensor q = haar_orthogonal(3, rng, k % 2 == 0);
    if (k < 200) {
      CHECK(oracle::orthogonality_residual(q.to_vector(), 3) <= 1e-6);
      if (k % 2 == 0) CHECK(std::abs(oracle::det(q.to_vector(), 3) - 1.0) <= 1e-6);
    }
    for (int i = 0; i < 9; ++i) mean[i] += q.at(static_cast<std::size_t>(i)) / count;
  }
  for (double m : mean) CHECK(std::abs(m) <= 0.05);
}

TEST_CASE("uniform permutations") {
  Rng rng(8);
  CHECK(uniform_permutation(1, rng).perm == std::vector<std::size_t>{0});
  std::map<std::vector<std::size_t>, int> counts;
  const int draws = 60000;
  for (int k = 0; k < draws; ++k) {
    const Permutation p = uniform_permutation(3, rng);
    CHECK(p.is_bijection());
    ++counts[p.perm];
  }
  CHECK(counts.size() == 6);
  const double expect = draws / 6.0;
  const double sigma = std::sqrt(draws * (1.0 / 6.0) * (5.0 / 6.0));
  for (const auto& [perm, c] : counts) CHECK(std::abs(c - expect) <= 3 * sigma);
}

TEST_CASE("permutation composition matches matrix products") {
  Rng rng(9);
  for (int k = 0; k < 10; ++k) {
    const Permutation a = uniform_permutation(5, rng), b = uniform_permutation(5, rng);
    CHECK(a.compose(b).matrix().to_vector() == matmul(a.matrix(), b.matrix()).to_vector());
    CHECK(a.compose(a.inverse()).perm == Permutation::identity(5).perm);
  }
}
