#include "lps/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "lps/errors.hpp"
#include "lps/groups.hpp"
#include "lps/symmetrization.hpp"

namespace lps::oracle {

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double h) {
  std::vector<double> g(x.size());
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

// ---- dense matrices -----------------------------------------------------------

Mat matmul(const Mat& a, const Mat& b, std::size_t m, std::size_t k, std::size_t n) {
  Mat c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

Mat transpose(const Mat& a, std::size_t rows, std::size_t cols) {
  Mat t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

double orthogonality_residual(const Mat& q, std::size_t d) {
  const Mat qtq = matmul(transpose(q, d, d), q, d, d, d);
  double ss = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double e = qtq[i * d + j] - (i == j ? 1.0 : 0.0);
      ss += e * e;
    }
  return std::sqrt(ss);
}

double det(const Mat& a, std::size_t d) {
  if (d > 6) throw RefusalError("oracle det: cofactor expansion refuses d > 6");
  if (d == 1) return a[0];
  double total = 0.0;
  for (std::size_t col = 0; col < d; ++col) {
    Mat minor;
    minor.reserve((d - 1) * (d - 1));
    for (std::size_t i = 1; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (j != col) minor.push_back(a[i * d + j]);
    const double sign = col % 2 == 0 ? 1.0 : -1.0;
    total += sign * a[col] * det(minor, d - 1);
  }
  return total;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

// ---- graphs -----------------------------------------------------------------------

PlainGraph PlainGraph::from(const Graph& g) {
  PlainGraph p;
  p.n = g.n;
  p.channels = g.node_features.cols();
  auto a = g.adjacency.data();
  p.adj.assign(a.size(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) p.adj[i] = a[i] != 0.0 ? 1 : 0;
  auto f = g.node_features.data();
  p.features.assign(f.begin(), f.end());
  return p;
}

PlainGraph inverse_act(const Perm& perm, const PlainGraph& g) {
  PlainGraph out = g;
  for (std::size_t j = 0; j < g.n; ++j) {
    for (std::size_t k = 0; k < g.n; ++k) out.adj[j * g.n + k] = g.adj[perm[j] * g.n + perm[k]];
    for (std::size_t c = 0; c < g.channels; ++c)
      out.features[j * g.channels + c] = g.features[perm[j] * g.channels + c];
  }
  return out;
}

PlainGraph act(const Perm& perm, const PlainGraph& g) {
  PlainGraph out = g;
  for (std::size_t j = 0; j < g.n; ++j) {
    for (std::size_t k = 0; k < g.n; ++k) out.adj[perm[j] * g.n + perm[k]] = g.adj[j * g.n + k];
    for (std::size_t c = 0; c < g.channels; ++c)
      out.features[perm[j] * g.channels + c] = g.features[j * g.channels + c];
  }
  return out;
}

std::vector<double> exact_group_average(const std::function<std::vector<double>(const PlainGraph&)>& f,
                                        const PlainGraph& x, std::size_t node_channels,
                                        std::size_t n_max) {
  if (x.n > n_max)
    throw RefusalError("exact_group_average: n = " + std::to_string(x.n) + " exceeds the cap " +
                       std::to_string(n_max));
  Perm perm(x.n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<double> acc;
  std::size_t count = 0;
  do {
    const std::vector<double> y = f(inverse_act(perm, x));
    std::vector<double> gy = y;
    if (node_channels > 0) {
      if (y.size() != x.n * node_channels)
        throw ContractError("exact_group_average: output is not n x node_channels");
      for (std::size_t j = 0; j < x.n; ++j)
        for (std::size_t c = 0; c < node_channels; ++c)
          gy[perm[j] * node_channels + c] = y[j * node_channels + c];
    }
    if (acc.empty()) acc.assign(gy.size(), 0.0);
    for (std::size_t i = 0; i < gy.size(); ++i) acc[i] += gy[i];
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (double& v : acc) v /= static_cast<double>(count);
  return acc;
}

namespace {

std::vector<std::size_t> rank_keys(const std::vector<std::vector<double>>& keys) {
  std::vector<std::vector<double>> distinct = keys;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<std::size_t> out(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i)
    out[i] = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), keys[i]) -
                                      distinct.begin());
  return out;
}

std::size_t distinct_count(const std::vector<std::size_t>& colors) {
  std::vector<std::size_t> c = colors;
  std::sort(c.begin(), c.end());
  return static_cast<std::size_t>(std::unique(c.begin(), c.end()) - c.begin());
}

}  // namespace

WlColoring wl1_colors(const PlainGraph& g) {
  std::vector<std::vector<double>> keys(g.n);
  for (std::size_t i = 0; i < g.n; ++i)
    keys[i].assign(g.features.begin() + static_cast<std::ptrdiff_t>(i * g.channels),
                   g.features.begin() + static_cast<std::ptrdiff_t>((i + 1) * g.channels));
  WlColoring out;
  out.colors = rank_keys(keys);
  std::size_t classes = distinct_count(out.colors);
  while (true) {
    for (std::size_t i = 0; i < g.n; ++i) {
      std::vector<double> nb;
      for (std::size_t j = 0; j < g.n; ++j)
        if (g.edge(i, j)) nb.push_back(static_cast<double>(out.colors[j]));
      std::sort(nb.begin(), nb.end());
      keys[i].assign(1, static_cast<double>(out.colors[i]));
      keys[i].insert(keys[i].end(), nb.begin(), nb.end());
    }
    std::vector<std::size_t> next = rank_keys(keys);
    const std::size_t next_classes = distinct_count(next);
    ++out.rounds;
    out.colors = std::move(next);
    if (next_classes == classes) break;
    classes = next_classes;
  }
  return out;
}

bool wl1_equivalent(const PlainGraph& g1, const PlainGraph& g2) {
  if (g1.n != g2.n || g1.channels != g2.channels) return false;
  PlainGraph u;
  u.n = g1.n + g2.n;
  u.channels = g1.channels;
  u.adj.assign(u.n * u.n, 0);
  for (std::size_t i = 0; i < g1.n; ++i)
    for (std::size_t j = 0; j < g1.n; ++j) u.adj[i * u.n + j] = g1.adj[i * g1.n + j];
  for (std::size_t i = 0; i < g2.n; ++i)
    for (std::size_t j = 0; j < g2.n; ++j) u.adj[(g1.n + i) * u.n + g1.n + j] = g2.adj[i * g2.n + j];
  u.features = g1.features;
  u.features.insert(u.features.end(), g2.features.begin(), g2.features.end());
  const WlColoring c = wl1_colors(u);
  std::vector<std::size_t> h1(c.colors.begin(), c.colors.begin() + static_cast<std::ptrdiff_t>(g1.n));
  std::vector<std::size_t> h2(c.colors.begin() + static_cast<std::ptrdiff_t>(g1.n), c.colors.end());
  std::sort(h1.begin(), h1.end());
  std::sort(h2.begin(), h2.end());
  return h1 == h2;
}

namespace {

struct Matcher {
  const PlainGraph& a;
  const PlainGraph& b;
  std::vector<std::size_t> deg_a, deg_b;
  std::vector<std::size_t> map;  // a-node -> b-node
  std::vector<char> used;
  bool want_all = false;
  std::vector<Perm> found;

  Matcher(const PlainGraph& a_, const PlainGraph& b_) : a(a_), b(b_) {
    deg_a.assign(a.n, 0);
    deg_b.assign(b.n, 0);
    for (std::size_t i = 0; i < a.n; ++i)
      for (std::size_t j = 0; j < a.n; ++j) {
        deg_a[i] += a.edge(i, j);
        deg_b[i] += b.edge(i, j);
      }
    map.assign(a.n, 0);
    used.assign(b.n, 0);
  }

  bool same_features(std::size_t i, std::size_t j) const {
    for (std::size_t c = 0; c < a.channels; ++c)
      if (a.features[i * a.channels + c] != b.features[j * b.channels + c]) return false;
    return true;
  }

  bool extend(std::size_t i) {
    if (i == a.n) {
      if (!want_all) return true;
      // Store as target -> source: b-node map[i] receives a-node i.
      Perm p(a.n);
      for (std::size_t k = 0; k < a.n; ++k) p[map[k]] = k;
      found.push_back(std::move(p));
      return false;
    }
    for (std::size_t j = 0; j < b.n; ++j) {
      if (used[j] || deg_a[i] != deg_b[j] || !same_features(i, j)) continue;
      bool ok = true;
      for (std::size_t k = 0; k < i && ok; ++k) ok = a.edge(i, k) == b.edge(j, map[k]);
      if (!ok) continue;
      map[i] = j;
      used[j] = 1;
      if (extend(i + 1)) return true;
      used[j] = 0;
    }
    return false;
  }
};

}  // namespace

bool isomorphic_bruteforce(const PlainGraph& g1, const PlainGraph& g2, std::size_t n_max) {
  if (g1.n != g2.n) return false;
  if (g1.n > n_max)
    throw RefusalError("isomorphic_bruteforce: n = " + std::to_string(g1.n) + " exceeds the cap " +
                       std::to_string(n_max));
  if (g1.channels != g2.channels) return false;
  Matcher m(g1, g2);
  return m.extend(0);
}

std::string canonical_form(const PlainGraph& g, std::size_t n_max) {
  if (g.n > n_max)
    throw RefusalError("canonical_form: n = " + std::to_string(g.n) + " exceeds the cap " +
                       std::to_string(n_max));
  Perm perm(g.n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::string best;
  std::string cur(g.n * (g.n - 1) / 2, '0');
  do {
    std::size_t k = 0;
    for (std::size_t i = 0; i < g.n; ++i)
      for (std::size_t j = i + 1; j < g.n; ++j) cur[k++] = g.edge(perm[i], perm[j]) ? '1' : '0';
    if (best.empty() || cur < best) best = cur;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

bool is_connected(const PlainGraph& g) {
  if (g.n == 0) return false;
  std::vector<char> seen(g.n, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < g.n; ++j)
      if (g.edge(i, j) && !seen[j]) {
        seen[j] = 1;
        ++count;
        stack.push_back(j);
      }
  }
  return count == g.n;
}

std::vector<Perm> automorphisms(const PlainGraph& g, std::size_t n_max) {
  if (g.n > n_max)
    throw RefusalError("automorphisms: n = " + std::to_string(g.n) + " exceeds the cap " +
                       std::to_string(n_max));
  Matcher m(g, g);
  m.want_all = true;
  m.extend(0);
  return m.found;
}

std::vector<std::vector<std::size_t>> automorphism_orbits(const PlainGraph& g, std::size_t n_max) {
  const auto autos = automorphisms(g, n_max);
  std::vector<std::size_t> root(g.n);
  std::iota(root.begin(), root.end(), std::size_t{0});
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (root[x] != x) x = root[x] = root[root[x]];
    return x;
  };
  for (const auto& p : autos)
    for (std::size_t j = 0; j < g.n; ++j) {
      const std::size_t a = find(j), b = find(p[j]);
      if (a != b) root[std::max(a, b)] = std::min(a, b);
    }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < g.n; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [r, members] : groups) out.push_back(std::move(members));
  return out;
}

std::optional<double> orbit_gap(const PlainGraph& g, const std::vector<double>& outputs, std::size_t c) {
  std::optional<double> worst;
  for (const auto& orbit : automorphism_orbits(g)) {
    if (orbit.size() < 2) continue;
    double gap = 0.0;
    for (std::size_t a = 0; a < orbit.size(); ++a)
      for (std::size_t b = a + 1; b < orbit.size(); ++b)
        for (std::size_t k = 0; k < c; ++k)
          gap = std::max(gap, std::fabs(outputs[orbit[a] * c + k] - outputs[orbit[b] * c + k]));
    worst = std::max(worst.value_or(0.0), gap);
  }
  return worst;
}

std::optional<double> automorphism_consistency(const GraphSymModel& model, const Graph& g,
                                               std::size_t n_samples, Rng& rng) {
  if (model.kind() != TaskKind::node_equivariant)
    throw ContractError("automorphism_consistency: model must be node-equivariant");
  NoGradGuard guard;
  const Estimate est = model.estimate(g, n_samples, rng);
  const auto out = est.mean.to_vector();
  return orbit_gap(PlainGraph::from(g), out, out.size() / g.n);
}

}  // namespace lps::oracle
