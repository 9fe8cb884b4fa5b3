#pragma once

// phi(x) = E_{g ~ p(g|x)} [ rho2(g) f(rho1(g)^-1 x) ], estimated by Monte Carlo.

#include <functional>
#include <vector>

#include "lps/distribution.hpp"
#include "lps/models.hpp"

namespace lps {

enum class TaskKind { graph_invariant, node_equivariant, pointcloud_equivariant };

struct SymmetrizationConfig {
  Mode mode = Mode::learned_ps;
  std::size_t train_samples = 1;
  std::size_t eval_samples = 10;
  double entropy_strength = 0.1;

  // Canonical mode always evaluates a single element.
  std::size_t effective(std::size_t n) const { return mode == Mode::canonical ? 1 : n; }
};

struct Estimate {
  Tensor mean;
  std::vector<Tensor> per_sample;
  std::vector<SampledElement> elements;
};

// Convex loss of one prediction against a target, returning a scalar.
using LossFn = std::function<Tensor(const Tensor& prediction, const Tensor& target)>;

struct TrainingLoss {
  Tensor total;          // task + strength * entropy
  Tensor task;           // mean over samples of the per-sample loss
  Tensor entropy;        // mean entropy regularizer (undefined without relaxed matrices)
  double loss_of_mean;   // loss applied to the averaged prediction
  Estimate estimate;
};

Tensor mse_loss(const Tensor& prediction, const Tensor& target);
Tensor l1_loss(const Tensor& prediction, const Tensor& target);
// Binary cross-entropy on a single logit; target is 0 or 1.
Tensor bce_with_logits(const Tensor& logit, const Tensor& target);

// Mean over output coordinates of the unbiased sample variance.
double output_variance(const std::vector<Tensor>& per_sample);

// Every permutation of n elements as a sampled element (n! of them).
std::vector<SampledElement> enumerate_sn(std::size_t n);

// Symmetrized MLP on graphs with an S_n distribution.
class GraphSymModel {
 public:
  GraphSymModel(Mlp base, SnDistribution dist, SymmetrizationConfig cfg, TaskKind kind,
                std::size_t out_channels);

  Mlp& base() { return base_; }
  const Mlp& base() const { return base_; }
  SnDistribution& dist() { return dist_; }
  const SnDistribution& dist() const { return dist_; }
  SymmetrizationConfig& config() { return cfg_; }
  const SymmetrizationConfig& config() const { return cfg_; }
  TaskKind kind() const { return kind_; }
  ParameterSet& params() { return params_; }

  // Input width the base MLP must accept for n-node graphs with c feature channels.
  static std::size_t input_width(std::size_t n, std::size_t c) { return n * n + n * c; }

  // flatten(P^T A P) ++ flatten(P^T X) as a [1, width] row.
  Tensor base_input(const Graph& g, const Tensor& perm_matrix) const;
  // rho2 applied to one base output row.
  Tensor output_action(const Tensor& base_row, const Tensor& perm_matrix, std::size_t n) const;

  Estimate estimate(const Graph& g, std::size_t n_samples, Rng& rng, bool with_relaxed = false) const;
  Estimate estimate_with(const Graph& g, std::vector<SampledElement> elements) const;
  TrainingLoss training_loss(const Graph& g, const Tensor& target, const LossFn& loss,
                             std::size_t n_samples, Rng& rng) const;

 private:
  Mlp base_;
  SnDistribution dist_;
  SymmetrizationConfig cfg_;
  TaskKind kind_;
  std::size_t out_channels_;
  ParameterSet params_;
};

// Symmetrized token transformer on point clouds with an S_n x O(3) distribution.
// Predicts a per-point displacement; positions are handled in centered
// coordinates and the translation is carried outside the sampler.
class PointSymModel {
 public:
  PointSymModel(Transformer base, VnDistribution dist, SymmetrizationConfig cfg, bool special = false);

  Transformer& base() { return base_; }
  const Transformer& base() const { return base_; }
  VnDistribution& dist() { return dist_; }
  const VnDistribution& dist() const { return dist_; }
  SymmetrizationConfig& config() { return cfg_; }
  const SymmetrizationConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  bool special() const { return special_; }

  // Centers positions; velocities and charges are left as they are.
  static PointCloudState centered(const PointCloudState& s);

  // Mean displacement over samples (and per-sample displacements).
  Estimate estimate_displacement(const PointCloudState& s, std::size_t n_samples, Rng& rng,
                                 bool with_relaxed = false) const;
  // Elements must have been drawn on centered(s).
  Estimate estimate_with(const PointCloudState& s, std::vector<SampledElement> elements) const;
  // Predicted next positions: x + mean displacement.
  Estimate estimate_euclidean(const PointCloudState& s, std::size_t n_samples, Rng& rng) const;
  TrainingLoss training_loss(const PointCloudState& s, const Tensor& target_displacement,
                             const LossFn& loss, std::size_t n_samples, Rng& rng) const;

 private:
  Transformer base_;
  VnDistribution dist_;
  SymmetrizationConfig cfg_;
  bool special_;
  ParameterSet params_;
};

}  // namespace lps
