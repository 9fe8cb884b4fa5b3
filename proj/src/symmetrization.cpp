#include "lps/symmetrization.hpp"

#include <algorithm>
#include <cmath>

#include "lps/errors.hpp"

namespace lps {

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  const Tensor d = prediction - target;
  return mean(d * d);
}

Tensor l1_loss(const Tensor& prediction, const Tensor& target) {
  return mean(abs(prediction - target));
}

Tensor bce_with_logits(const Tensor& logit, const Tensor& target) {
  // softplus(x) - y x
  return mean(softplus(logit) - logit * target);
}

double output_variance(const std::vector<Tensor>& per_sample) {
  if (per_sample.size() < 2) throw ContractError("output_variance: need at least two samples");
  const std::size_t dim = per_sample[0].numel();
  const double n = static_cast<double>(per_sample.size());
  double total = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    const double shift = per_sample[0].at(k);
    double m = 0.0;
    for (const auto& s : per_sample) m += s.at(k) - shift;
    m /= n;
    double ss = 0.0;
    for (const auto& s : per_sample) ss += (s.at(k) - shift - m) * (s.at(k) - shift - m);
    total += ss / (n - 1.0);
  }
  return total / static_cast<double>(dim);
}

std::vector<SampledElement> enumerate_sn(std::size_t n) {
  std::vector<SampledElement> out;
  Permutation p = Permutation::identity(n);
  do {
    SampledElement e;
    e.perm = p;
    e.perm_matrix = p.matrix();
    out.push_back(std::move(e));
  } while (std::next_permutation(p.perm.begin(), p.perm.end()));
  return out;
}

namespace {

Tensor mean_of(const std::vector<Tensor>& xs) {
  Tensor acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = acc + xs[i];
  return scale(acc, 1.0 / static_cast<double>(xs.size()));
}

TrainingLoss assemble_loss(Estimate est, const Tensor& target, const LossFn& loss, double strength) {
  TrainingLoss out;
  std::vector<Tensor> terms;
  std::vector<Tensor> entropies;
  for (std::size_t i = 0; i < est.per_sample.size(); ++i) {
    terms.push_back(loss(est.per_sample[i], target));
    if (est.elements[i].relaxed.defined()) entropies.push_back(entropy_regularizer(est.elements[i].relaxed));
  }
  out.task = mean_of(terms);
  out.total = out.task;
  if (!entropies.empty()) {
    out.entropy = mean_of(entropies);
    out.total = out.task + scale(out.entropy, strength);
  }
  {
    NoGradGuard guard;
    out.loss_of_mean = loss(est.mean.detach(), target).item();
  }
  out.estimate = std::move(est);
  return out;
}

}  // namespace

// ---- graphs ------------------------------------------------------------------

GraphSymModel::GraphSymModel(Mlp base, SnDistribution dist, SymmetrizationConfig cfg, TaskKind kind,
                             std::size_t out_channels)
    : base_(std::move(base)), dist_(std::move(dist)), cfg_(cfg), kind_(kind), out_channels_(out_channels) {
  if (kind == TaskKind::pointcloud_equivariant)
    throw ContractError("graph model cannot serve a point-cloud task");
  if (cfg.train_samples < 1 || cfg.eval_samples < 1)
    throw ContractError("sample counts must be at least 1");
  params_.extend("base.", base_.params());
  params_.extend("dist.", dist_.params());
}

Tensor GraphSymModel::base_input(const Graph& g, const Tensor& pm) const {
  const std::size_t n = g.n;
  const Tensor pt = transpose(pm);
  const Tensor a = matmul(matmul(pt, g.adjacency), pm);
  const Tensor x = matmul(pt, g.node_features);
  return concat({reshape(a, {1, n * n}), reshape(x, {1, x.numel()})}, 1);
}

Tensor GraphSymModel::output_action(const Tensor& row, const Tensor& pm, std::size_t n) const {
  if (kind_ == TaskKind::graph_invariant) return row;
  return matmul(pm, reshape(row, {n, out_channels_}));
}

Estimate GraphSymModel::estimate_with(const Graph& g, std::vector<SampledElement> elements) const {
  if (elements.empty()) throw ContractError("estimate: need at least one sample");
  std::vector<Tensor> inputs;
  inputs.reserve(elements.size());
  for (const auto& e : elements) {
    if (e.perm_matrix.rows() != g.n)
      throw ContractError("estimate: group element size does not match the graph");
    inputs.push_back(base_input(g, e.perm_matrix));
  }
  const Tensor out = base_.forward(inputs.size() == 1 ? inputs[0] : concat(inputs, 0));
  Estimate est;
  for (std::size_t i = 0; i < elements.size(); ++i)
    est.per_sample.push_back(output_action(slice_rows(out, i, 1), elements[i].perm_matrix, g.n));
  est.mean = mean_of(est.per_sample);
  est.elements = std::move(elements);
  return est;
}

Estimate GraphSymModel::estimate(const Graph& g, std::size_t n_samples, Rng& rng, bool with_relaxed) const {
  const std::size_t count = cfg_.effective(n_samples);
  std::vector<SampledElement> elements;
  elements.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng sub = rng.substream(i);
    elements.push_back(dist_.sample(g, cfg_.mode, sub, with_relaxed));
  }
  return estimate_with(g, std::move(elements));
}

TrainingLoss GraphSymModel::training_loss(const Graph& g, const Tensor& target, const LossFn& loss,
                                          std::size_t n_samples, Rng& rng) const {
  return assemble_loss(estimate(g, n_samples, rng, true), target, loss, cfg_.entropy_strength);
}

// ---- point clouds ----------------------------------------------------------------

PointSymModel::PointSymModel(Transformer base, VnDistribution dist, SymmetrizationConfig cfg, bool special)
    : base_(std::move(base)), dist_(std::move(dist)), cfg_(cfg), special_(special) {
  if (cfg.train_samples < 1 || cfg.eval_samples < 1)
    throw ContractError("sample counts must be at least 1");
  params_.extend("base.", base_.params());
  params_.extend("dist.", dist_.params());
}

PointCloudState PointSymModel::centered(const PointCloudState& s) {
  PointCloudState c = s;
  c.positions = center(s.positions).centered;
  return c;
}

Estimate PointSymModel::estimate_with(const PointCloudState& s, std::vector<SampledElement> elements) const {
  if (elements.empty()) throw ContractError("estimate: need at least one sample");
  const std::size_t n = s.n();
  if (base_.config().token_count != n * n)
    throw ContractError("estimate: transformer expects " + std::to_string(base_.config().token_count) +
                        " tokens, point cloud gives " + std::to_string(n * n));
  const PointCloudState c = centered(s);
  const Tensor charges = reshape(c.charges, {n, 1});
  std::vector<Tensor> tokens;
  tokens.reserve(elements.size());
  for (const auto& e : elements) {
    const Tensor pt = transpose(e.perm_matrix);
    const Tensor& q = e.rotation;
    tokens.push_back(tokenize_nbody(matmul(matmul(pt, c.positions), q),
                                    matmul(matmul(pt, c.velocities), q), matmul(pt, charges)));
  }
  const std::size_t batch = elements.size();
  const Tensor out = base_.run(batch == 1 ? tokens[0] : concat(tokens, 0), batch);
  Estimate est;
  for (std::size_t i = 0; i < batch; ++i) {
    const Tensor y = detokenize_nodes(slice_rows(out, i * n * n, n * n), n);
    est.per_sample.push_back(matmul(matmul(elements[i].perm_matrix, y), transpose(elements[i].rotation)));
  }
  est.mean = mean_of(est.per_sample);
  est.elements = std::move(elements);
  return est;
}

Estimate PointSymModel::estimate_displacement(const PointCloudState& s, std::size_t n_samples, Rng& rng,
                                              bool with_relaxed) const {
  s.validate();
  const PointCloudState c = centered(s);
  const std::size_t count = cfg_.effective(n_samples);
  std::vector<SampledElement> elements;
  elements.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng sub = rng.substream(i);
    elements.push_back(dist_.sample_product(c, special_, cfg_.mode, sub, with_relaxed));
  }
  return estimate_with(s, std::move(elements));
}

Estimate PointSymModel::estimate_euclidean(const PointCloudState& s, std::size_t n_samples, Rng& rng) const {
  Estimate est = estimate_displacement(s, n_samples, rng);
  est.mean = s.positions + est.mean;
  for (auto& y : est.per_sample) y = s.positions + y;
  return est;
}

TrainingLoss PointSymModel::training_loss(const PointCloudState& s, const Tensor& target,
                                          const LossFn& loss, std::size_t n_samples, Rng& rng) const {
  return assemble_loss(estimate_displacement(s, n_samples, rng, true), target, loss,
                       cfg_.entropy_strength);
}

}  // namespace lps
