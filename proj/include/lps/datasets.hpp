#pragma once

#include <string>
#include <vector>

#include "lps/groups.hpp"

namespace lps {

// One representative per isomorphism class of connected n-node graphs (n <= 6).
std::vector<Graph> gen_all_graphs(std::size_t n);

// Circulant graph on n nodes with edges i ~ i +- 1 and i ~ i +- skip.
Graph circulant_skip_link(std::size_t n, std::size_t skip);

struct CslDataset {
  std::size_t n = 0;
  std::vector<std::size_t> skips;
  std::vector<Graph> graphs;
  std::vector<int> labels;  // index into skips
  std::vector<std::size_t> train, val, test;
};

// `per_class` random relabelings of C(n, 1, s) for every s in skips, with a
// class-balanced 80/10/10 split. Verifies 1-WL equivalence across classes and
// non-isomorphism between class representatives.
CslDataset gen_csl_pairs(std::size_t n, const std::vector<std::size_t>& skips,
                         std::size_t per_class, Rng& rng);

struct NbodyConfig {
  std::size_t particles = 5;
  double dt = 0.001;
  std::size_t steps = 1000;
  double softening = 0.1;
  double position_scale = 1.0;
  double velocity_scale = 0.5;
};

struct NbodyExample {
  PointCloudState initial;
  Tensor target;  // n x 3 displacement of positions after the rollout
};

// Leapfrog (kick-drift-kick) integration of softened Coulomb dynamics.
void integrate_nbody(std::vector<double>& x, std::vector<double>& v, const std::vector<double>& q,
                     const NbodyConfig& cfg, std::size_t steps);
// Net force on every particle, accumulated pairwise so the total is zero.
std::vector<double> coulomb_forces(const std::vector<double>& x, const std::vector<double>& q,
                                   double softening);
NbodyExample simulate_nbody(const PointCloudState& initial, const NbodyConfig& cfg);
std::vector<NbodyExample> gen_nbody(const NbodyConfig& cfg, std::size_t count, Rng& rng);

// graph6 text format (one graph per line).
Graph parse_graph6(const std::string& line);
std::string to_graph6(const Graph& g);
std::vector<Graph> read_graph6_file(const std::string& path);

// Length-prefixed binary container `<path>.bin` with JSON manifest `<path>.json`
// holding adjacency bitsets, node features and integer labels.
void save_graph_cache(const std::string& path, const std::vector<Graph>& graphs,
                      const std::vector<int>& labels);
void load_graph_cache(const std::string& path, std::vector<Graph>& graphs, std::vector<int>& labels);

}  // namespace lps
