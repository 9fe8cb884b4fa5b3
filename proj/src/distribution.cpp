#include "lps/distribution.hpp"

#include <cmath>

#include "lps/errors.hpp"

namespace lps {

std::vector<double> NoiseSpec::draw(std::size_t count, Rng& rng) const {
  switch (kind) {
    case NoiseKind::uniform_0_eta:
      return rng.uniforms(count, 0.0, eta);
    case NoiseKind::gaussian_0_eta2:
      return rng.normals(count, eta);
    case NoiseKind::zero:
      break;
  }
  return std::vector<double>(count, 0.0);
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::learned_ps:
      return "ps";
    case Mode::uniform_ga:
      return "ga";
    case Mode::canonical:
      return "canon";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "ps" || s == "learned_ps") return Mode::learned_ps;
  if (s == "ga" || s == "uniform_ga") return Mode::uniform_ga;
  if (s == "canon" || s == "canonical") return Mode::canonical;
  throw ContractError("unknown mode '" + s + "'");
}

Tensor entropy_regularizer(const Tensor& relaxed) {
  if (relaxed.rank() != 2 || relaxed.rows() != relaxed.cols())
    throw DimensionError("entropy_regularizer: expected a square matrix, got " +
                         shape_str(relaxed.shape()));
  const double n = static_cast<double>(relaxed.rows());
  const Tensor plogp = relaxed * log(clamp_min(relaxed, 1e-12));
  const Tensor rows = sum(sum(plogp, 1));
  const Tensor cols = sum(sum(plogp, 0));
  return scale(rows + cols, -1.0 / (2.0 * n));
}

double aggregated_entropy(const std::vector<Permutation>& samples) {
  if (samples.empty()) throw ContractError("aggregated_entropy: no samples");
  const std::size_t n = samples[0].size();
  std::vector<double> avg(n * n, 0.0);
  for (const auto& p : samples) {
    if (p.size() != n) throw ContractError("aggregated_entropy: samples differ in size");
    for (std::size_t j = 0; j < n; ++j) avg[p.perm[j] * n + j] += 1.0;
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double p = avg[i * n + j] * inv;
      if (p > 0.0) total -= p * std::log(p);
    }
  return total / static_cast<double>(n);
}

// ---- S_n ---------------------------------------------------------------------

SnDistribution::SnDistribution(const SnConfig& cfg, Rng& rng) : cfg_(cfg), backbone_(cfg.gin, rng) {}

Tensor SnDistribution::draw_noise(const Graph& g, Mode mode, Rng& rng) const {
  const std::size_t count = (g.n + 1) * cfg_.gin.in_dim;
  if (mode == Mode::canonical) return Tensor::zeros({g.n + 1, cfg_.gin.in_dim});
  return Tensor::from({g.n + 1, cfg_.gin.in_dim}, cfg_.noise.draw(count, rng));
}

Tensor SnDistribution::features(const Graph& g, const Tensor& noise) const {
  const Graph gv = add_virtual_node(g, backbone_.virtual_feature());
  if (noise.shape() != gv.node_features.shape())
    throw ContractError("sample_sn: noise shape " + shape_str(noise.shape()) +
                        " does not match augmented features " + shape_str(gv.node_features.shape()));
  return backbone_.forward(gv, gv.node_features + noise);
}

SampledElement SnDistribution::sample_with_noise(const Graph& g, const Tensor& noise,
                                                 bool with_relaxed) const {
  const Tensor z = features(g, noise);
  ArgsortResult hard = hard_argsort(z);
  SampledElement out;
  out.tie_warnings = hard.ties;
  if (with_relaxed) {
    out.relaxed = relaxed_argsort(z, cfg_.tau, cfg_.sinkhorn_iters);
    out.perm_matrix = straight_through(hard.perm, out.relaxed);
  } else {
    out.perm_matrix = hard.perm.matrix();
  }
  out.perm = std::move(hard.perm);
  return out;
}

SampledElement SnDistribution::sample(const Graph& g, Mode mode, Rng& rng, bool with_relaxed) const {
  g.validate();
  if (mode == Mode::uniform_ga) {
    SampledElement out;
    out.perm = uniform_permutation(g.n, rng);
    out.perm_matrix = out.perm->matrix();
    return out;
  }
  return sample_with_noise(g, draw_noise(g, mode, rng), with_relaxed && mode == Mode::learned_ps);
}

// ---- point clouds ------------------------------------------------------------

VnDistribution::VnDistribution(const VnDistConfig& cfg, Rng& rng) : cfg_(cfg), backbone_(cfg.vn, rng) {}

PointNoise VnDistribution::draw_noise(std::size_t n, Mode mode, Rng& rng) const {
  PointNoise noise;
  if (mode == Mode::canonical) {
    noise.eps1 = Tensor::zeros({n, 3});
    noise.eps2 = Tensor::zeros({n, 3});
    noise.jitter = Tensor::zeros({3, 3});
    return noise;
  }
  noise.eps1 = Tensor::from({n, 3}, cfg_.noise.draw(3 * n, rng));
  noise.eps2 = Tensor::from({n, 3}, cfg_.noise.draw(3 * n, rng));
  noise.jitter = Tensor::from({3, 3}, rng.normals(9));
  return noise;
}

Tensor VnDistribution::orthogonalize(const Tensor& z_rot, const Tensor& jitter, bool special) const {
  double fro = 0.0;
  for (double v : z_rot.data()) fro += v * v;
  const Tensor z = z_rot + scale(jitter, cfg_.jitter_scale * std::sqrt(fro));
  const Tensor q = gram_schmidt(z);
  return special ? scale_det(q) : q;
}

SampledElement VnDistribution::sample_o3_with_noise(const PointCloudState& s, bool special,
                                                    const PointNoise& noise) const {
  const VnOutput f = backbone_.forward(s.positions, s.velocities, noise.eps1, noise.eps2);
  SampledElement out;
  out.rotation = orthogonalize(f.z_rot, noise.jitter, special);
  return out;
}

SampledElement VnDistribution::sample_o3(const PointCloudState& s, bool special, Mode mode,
                                         Rng& rng) const {
  s.validate();
  if (mode == Mode::uniform_ga) {
    SampledElement out;
    out.rotation = haar_orthogonal(3, rng, special);
    return out;
  }
  return sample_o3_with_noise(s, special, draw_noise(s.n(), mode, rng));
}

SampledElement VnDistribution::sample_product_with_noise(const PointCloudState& s, bool special,
                                                         const PointNoise& noise,
                                                         bool with_relaxed) const {
  const VnOutput f = backbone_.forward(s.positions, s.velocities, noise.eps1, noise.eps2);
  ArgsortResult hard = hard_argsort(f.z_perm);
  SampledElement out;
  out.tie_warnings = hard.ties;
  if (with_relaxed) {
    out.relaxed = relaxed_argsort(f.z_perm, cfg_.tau, cfg_.sinkhorn_iters);
    out.perm_matrix = straight_through(hard.perm, out.relaxed);
  } else {
    out.perm_matrix = hard.perm.matrix();
  }
  out.perm = std::move(hard.perm);
  out.rotation = orthogonalize(f.z_rot, noise.jitter, special);
  return out;
}

SampledElement VnDistribution::sample_product(const PointCloudState& s, bool special, Mode mode,
                                              Rng& rng, bool with_relaxed) const {
  s.validate();
  if (mode == Mode::uniform_ga) {
    SampledElement out;
    out.perm = uniform_permutation(s.n(), rng);
    out.perm_matrix = out.perm->matrix();
    out.rotation = haar_orthogonal(3, rng, special);
    return out;
  }
  return sample_product_with_noise(s, special, draw_noise(s.n(), mode, rng),
                                   with_relaxed && mode == Mode::learned_ps);
}

}  // namespace lps
