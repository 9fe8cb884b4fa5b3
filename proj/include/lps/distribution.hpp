#pragma once

// Input-conditional equivariant distributions over group elements, realized
// as a backbone applied to noise-perturbed input followed by a postprocessor.

#include <optional>
#include <vector>

#include "lps/backbones.hpp"
#include "lps/groups.hpp"

namespace lps {

enum class Mode { learned_ps, uniform_ga, canonical };
enum class NoiseKind { uniform_0_eta, gaussian_0_eta2, zero };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::uniform_0_eta;
  double eta = 1.0;

  std::vector<double> draw(std::size_t count, Rng& rng) const;
};

const char* mode_name(Mode m);
Mode parse_mode(const std::string& s);

struct SampledElement {
  std::optional<Permutation> perm;
  Tensor perm_matrix;  // straight-through P when relaxed is present, else the hard P
  Tensor relaxed;      // relaxed permutation; undefined unless requested in learned mode
  Tensor rotation;     // d x d orthogonal matrix for rotation groups
  std::size_t tie_warnings = 0;
};

// Entropy (natural log) of every row and column of P, averaged over all 2n of them.
Tensor entropy_regularizer(const Tensor& relaxed);

// Mean row entropy of the average of hard permutation matrices.
double aggregated_entropy(const std::vector<Permutation>& samples);

struct SnConfig {
  GinConfig gin;
  NoiseSpec noise{NoiseKind::uniform_0_eta, 1.0};
  double tau = 0.01;
  int sinkhorn_iters = 20;
};

// p(g | x) over S_n for graphs.
class SnDistribution {
 public:
  SnDistribution(const SnConfig& cfg, Rng& rng);

  const SnConfig& config() const { return cfg_; }
  ParameterSet& params() { return backbone_.params(); }
  const Gin& backbone() const { return backbone_; }

  // Noise for the (n+1) x in_dim virtual-node-augmented features.
  Tensor draw_noise(const Graph& g, Mode mode, Rng& rng) const;
  SampledElement sample(const Graph& g, Mode mode, Rng& rng, bool with_relaxed) const;
  // Deterministic path for a given noise realization.
  SampledElement sample_with_noise(const Graph& g, const Tensor& noise, bool with_relaxed) const;
  // Backbone output z for a given noise realization, shape [n, 1].
  Tensor features(const Graph& g, const Tensor& noise) const;

 private:
  SnConfig cfg_;
  Gin backbone_;
};

struct PointNoise {
  Tensor eps1;    // n x 3
  Tensor eps2;    // n x 3
  Tensor jitter;  // 3 x 3, transforms like the rotation features
};

struct VnDistConfig {
  VnConfig vn;
  NoiseSpec noise{NoiseKind::gaussian_0_eta2, 1.0};
  double tau = 0.1;
  int sinkhorn_iters = 20;
  double jitter_scale = 1e-8;
};

// p(g | x) over O(3), SO(3) and S_n x O(3) for point clouds.
class VnDistribution {
 public:
  VnDistribution(const VnDistConfig& cfg, Rng& rng);

  const VnDistConfig& config() const { return cfg_; }
  ParameterSet& params() { return backbone_.params(); }

  PointNoise draw_noise(std::size_t n, Mode mode, Rng& rng) const;

  // `s` must be centered.
  SampledElement sample_o3(const PointCloudState& s, bool special, Mode mode, Rng& rng) const;
  SampledElement sample_o3_with_noise(const PointCloudState& s, bool special,
                                      const PointNoise& noise) const;
  SampledElement sample_product(const PointCloudState& s, bool special, Mode mode, Rng& rng,
                                bool with_relaxed) const;
  SampledElement sample_product_with_noise(const PointCloudState& s, bool special,
                                           const PointNoise& noise, bool with_relaxed) const;

 private:
  Tensor orthogonalize(const Tensor& z_rot, const Tensor& jitter, bool special) const;
  VnDistConfig cfg_;
  VnLite backbone_;
};

}  // namespace lps
