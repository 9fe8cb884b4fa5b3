#include "lps/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"
#include "lps/errors.hpp"
#include "lps/oracles.hpp"

namespace lps {

std::vector<Graph> gen_all_graphs(std::size_t n) {
  if (n < 1) throw ContractError("gen_all_graphs: n must be at least 1");
  if (n > 6) throw RefusalError("gen_all_graphs: n = " + std::to_string(n) + " exceeds the cap 6");
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) slots.emplace_back(i, j);
  std::set<std::string> seen;
  std::vector<Graph> out;
  const std::uint64_t total = std::uint64_t{1} << slots.size();
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    oracle::PlainGraph pg;
    pg.n = n;
    pg.adj.assign(n * n, 0);
    pg.features.assign(n, 1.0);
    for (std::size_t b = 0; b < slots.size(); ++b)
      if (mask >> b & 1u) {
        auto [i, j] = slots[b];
        pg.adj[i * n + j] = pg.adj[j * n + i] = 1;
      }
    if (!oracle::is_connected(pg)) continue;
    if (!seen.insert(oracle::canonical_form(pg)).second) continue;
    out.push_back(Graph::from_adjacency(n, pg.adj));
  }
  return out;
}

Graph circulant_skip_link(std::size_t n, std::size_t skip) {
  if (n < 3 || skip < 2 || skip >= n - 1 || std::gcd(n, skip) != 1)
    throw ContractError("circulant_skip_link: skip " + std::to_string(skip) +
                        " must lie in [2, n-2] and be coprime to n = " + std::to_string(n));
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    edges.emplace_back(i, (i + 1) % n);
    edges.emplace_back(i, (i + skip) % n);
  }
  return Graph::from_edges(n, edges);
}

CslDataset gen_csl_pairs(std::size_t n, const std::vector<std::size_t>& skips, std::size_t per_class,
                         Rng& rng) {
  if (n < 8) throw ContractError("gen_csl_pairs: n must be at least 8");
  if (skips.size() < 2) throw ContractError("gen_csl_pairs: need at least two skips");
  if (per_class < 10) throw ContractError("gen_csl_pairs: need at least 10 graphs per class");
  std::vector<Graph> reps;
  for (std::size_t s : skips) reps.push_back(circulant_skip_link(n, s));
  for (std::size_t a = 0; a < reps.size(); ++a)
    for (std::size_t b = a + 1; b < reps.size(); ++b) {
      const auto ga = oracle::PlainGraph::from(reps[a]);
      const auto gb = oracle::PlainGraph::from(reps[b]);
      if (!oracle::wl1_equivalent(ga, gb))
        throw ContractError("gen_csl_pairs: skips " + std::to_string(skips[a]) + " and " +
                            std::to_string(skips[b]) + " are separated by 1-WL");
      if (oracle::isomorphic_bruteforce(ga, gb, n))
        throw ContractError("gen_csl_pairs: skips " + std::to_string(skips[a]) + " and " +
                            std::to_string(skips[b]) + " give isomorphic graphs");
    }
  CslDataset ds;
  ds.n = n;
  ds.skips = skips;
  for (std::size_t c = 0; c < skips.size(); ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < per_class; ++k) {
      Rng sub = rng.substream(c, k);
      idx.push_back(ds.graphs.size());
      ds.graphs.push_back(act_graph(uniform_permutation(n, sub), reps[c]));
      ds.labels.push_back(static_cast<int>(c));
    }
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.index(i + 1)]);
    const std::size_t n_train = per_class * 8 / 10;
    const std::size_t n_val = per_class / 10;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (i < n_train)
        ds.train.push_back(idx[i]);
      else if (i < n_train + n_val)
        ds.val.push_back(idx[i]);
      else
        ds.test.push_back(idx[i]);
    }
  }
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.val.begin(), ds.val.end());
  std::sort(ds.test.begin(), ds.test.end());
  return ds;
}

// ---- n-body -------------------------------------------------------------------------

std::vector<double> coulomb_forces(const std::vector<double>& x, const std::vector<double>& q,
                                   double softening) {
  const std::size_t n = q.size();
  std::vector<double> f(3 * n, 0.0);
  const double s2 = softening * softening;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double d[3], r2 = s2;
      for (int a = 0; a < 3; ++a) {
        d[a] = x[3 * i + a] - x[3 * j + a];
        r2 += d[a] * d[a];
      }
      const double k = q[i] * q[j] / (r2 * std::sqrt(r2));
      for (int a = 0; a < 3; ++a) {
        f[3 * i + a] += k * d[a];
        f[3 * j + a] -= k * d[a];
      }
    }
  return f;
}

void integrate_nbody(std::vector<double>& x, std::vector<double>& v, const std::vector<double>& q,
                     const NbodyConfig& cfg, std::size_t steps) {
  std::vector<double> f = coulomb_forces(x, q, cfg.softening);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += 0.5 * cfg.dt * f[i];
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += cfg.dt * v[i];
    f = coulomb_forces(x, q, cfg.softening);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += 0.5 * cfg.dt * f[i];
  }
}

NbodyExample simulate_nbody(const PointCloudState& initial, const NbodyConfig& cfg) {
  initial.validate();
  const std::size_t n = initial.n();
  std::vector<double> x = initial.positions.to_vector();
  std::vector<double> v = initial.velocities.to_vector();
  const std::vector<double> q = initial.charges.to_vector();
  integrate_nbody(x, v, q, cfg, cfg.steps);
  std::vector<double> d(3 * n);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] - initial.positions.at(i);
  NbodyExample ex;
  ex.initial = initial;
  ex.target = Tensor::from({n, 3}, std::move(d));
  return ex;
}

std::vector<NbodyExample> gen_nbody(const NbodyConfig& cfg, std::size_t count, Rng& rng) {
  if (cfg.particles < 1 || count < 1 || cfg.steps < 1)
    throw ContractError("gen_nbody: counts must be positive");
  const std::size_t n = cfg.particles;
  std::vector<NbodyExample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Rng sub = rng.substream(k);
    PointCloudState s;
    s.positions = Tensor::from({n, 3}, sub.normals(3 * n, cfg.position_scale));
    s.velocities = Tensor::from({n, 3}, sub.normals(3 * n, cfg.velocity_scale));
    std::vector<double> q(n);
    for (double& c : q) c = sub.uniform() < 0.5 ? -1.0 : 1.0;
    s.charges = Tensor::from({n, 1}, std::move(q));
    out.push_back(simulate_nbody(s, cfg));
  }
  return out;
}

// ---- graph6 --------------------------------------------------------------------------

Graph parse_graph6(const std::string& raw) {
  std::string line = raw;
  if (line.rfind(">>graph6<<", 0) == 0) line = line.substr(10);
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
  if (line.empty()) throw ContractError("graph6: empty line");
  std::size_t pos = 0, n = 0;
  auto byte = [&](std::size_t i) -> unsigned {
    if (i >= line.size()) throw ContractError("graph6: truncated line");
    const unsigned b = static_cast<unsigned char>(line[i]);
    if (b < 63 || b > 126) throw ContractError("graph6: invalid byte");
    return b - 63;
  };
  if (line[0] != '~') {
    n = byte(0);
    pos = 1;
  } else if (line.size() > 1 && line[1] != '~') {
    n = (byte(1) << 12) | (byte(2) << 6) | byte(3);
    pos = 4;
  } else {
    throw ContractError("graph6: graphs with more than 258047 nodes are not supported");
  }
  if (n == 0) throw ContractError("graph6: graph has no nodes");
  std::vector<int> adj(n * n, 0);
  std::size_t bit = 0;
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t i = 0; i < j; ++i, ++bit) {
      const unsigned chunk = byte(pos + bit / 6);
      if (chunk >> (5 - bit % 6) & 1u) adj[i * n + j] = adj[j * n + i] = 1;
    }
  return Graph::from_adjacency(n, adj);
}

std::string to_graph6(const Graph& g) {
  const std::size_t n = g.n;
  std::string out;
  if (n < 63) {
    out.push_back(static_cast<char>(n + 63));
  } else {
    out.push_back('~');
    for (int s : {12, 6, 0}) out.push_back(static_cast<char>(((n >> s) & 63u) + 63));
  }
  unsigned acc = 0;
  int filled = 0;
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t i = 0; i < j; ++i) {
      acc = acc << 1 | (g.has_edge(i, j) ? 1u : 0u);
      if (++filled == 6) {
        out.push_back(static_cast<char>(acc + 63));
        acc = 0;
        filled = 0;
      }
    }
  if (filled > 0) out.push_back(static_cast<char>((acc << (6 - filled)) + 63));
  return out;
}

std::vector<Graph> read_graph6_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<Graph> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    out.push_back(parse_graph6(line));
  }
  return out;
}

// ---- cache ----------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'L', 'P', 'S', 'G'};

void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::vector<unsigned char>& buf, std::size_t& pos) {
  if (pos + 8 > buf.size()) throw ContractError("graph cache is truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
  pos += 8;
  return v;
}

}  // namespace

void save_graph_cache(const std::string& path, const std::vector<Graph>& graphs,
                      const std::vector<int>& labels) {
  if (labels.size() != graphs.size()) throw ContractError("graph cache: one label per graph");
  std::vector<unsigned char> blob(kMagic, kMagic + 4);
  put_u64(blob, graphs.size());
  nlohmann::json manifest;
  manifest["format"] = "lps-graph-cache-v1";
  manifest["count"] = graphs.size();
  manifest["records"] = nlohmann::json::array();
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const Graph& g = graphs[k];
    std::vector<unsigned char> rec;
    put_u64(rec, g.n);
    put_u64(rec, g.node_features.cols());
    put_u64(rec, static_cast<std::uint64_t>(static_cast<std::int64_t>(labels[k])));
    std::vector<unsigned char> bits((g.n * g.n + 7) / 8, 0);
    for (std::size_t i = 0; i < g.n * g.n; ++i)
      if (g.adjacency.at(i) != 0.0) bits[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
    rec.insert(rec.end(), bits.begin(), bits.end());
    for (double f : g.node_features.data()) put_u64(rec, std::bit_cast<std::uint64_t>(f));
    manifest["records"].push_back({{"offset", blob.size()}, {"length", rec.size()}, {"n", g.n}, {"label", labels[k]}});
    put_u64(blob, rec.size());
    blob.insert(blob.end(), rec.begin(), rec.end());
  }
  std::ofstream bin(path + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + path + ".bin");
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  std::ofstream js(path + ".json");
  js << manifest.dump(2) << '\n';
}

void load_graph_cache(const std::string& path, std::vector<Graph>& graphs, std::vector<int>& labels) {
  std::ifstream bin(path + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + path + ".bin");
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (blob.size() < 12 || !std::equal(kMagic, kMagic + 4, blob.begin()))
    throw ContractError("graph cache: bad magic");
  std::size_t pos = 4;
  const std::uint64_t count = get_u64(blob, pos);
  graphs.clear();
  labels.clear();
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t len = get_u64(blob, pos);
    const std::size_t end = pos + len;
    if (end > blob.size()) throw ContractError("graph cache is truncated");
    const std::size_t n = get_u64(blob, pos);
    const std::size_t c = get_u64(blob, pos);
    labels.push_back(static_cast<int>(static_cast<std::int64_t>(get_u64(blob, pos))));
    std::vector<int> adj(n * n, 0);
    const std::size_t nbytes = (n * n + 7) / 8;
    if (pos + nbytes > end) throw ContractError("graph cache record is truncated");
    for (std::size_t i = 0; i < n * n; ++i) adj[i] = blob[pos + i / 8] >> (i % 8) & 1u;
    pos += nbytes;
    std::vector<double> feats(n * c);
    for (double& f : feats) f = std::bit_cast<double>(get_u64(blob, pos));
    if (pos != end) throw ContractError("graph cache record has trailing bytes");
    Graph g = Graph::from_adjacency(n, adj);
    g.node_features = Tensor::from({n, c}, std::move(feats));
    g.validate();
    graphs.push_back(std::move(g));
  }
}

}  // namespace lps
