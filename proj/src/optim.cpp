#include "lps/optim.hpp"

#include <cmath>

#include "lps/errors.hpp"

namespace lps {

Tensor& ParameterSet::add(const std::string& name, Tensor tensor) {
  if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
  if (!tensor.requires_grad()) throw ContractError("parameter '" + name + "' must require grad");
  index_[name] = params_.size();
  params_.push_back({name, std::move(tensor)});
  return params_.back().tensor;
}

void ParameterSet::extend(const std::string& prefix, const ParameterSet& other) {
  for (const auto& p : other.params_) add(prefix + p.name, p.tensor);
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return params_[it->second].tensor;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return params_[it->second].tensor;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.tensor.numel();
  return total;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  for (auto& p : params_) {
    if (!other.contains(p.name)) continue;
    const Tensor& src = other.get(p.name);
    if (src.shape() != p.tensor.shape())
      throw DimensionError("copy_values_from: shape mismatch for '" + p.name + "'");
    auto dst = p.tensor.mutable_data();
    auto s = src.data();
    std::copy(s.begin(), s.end(), dst.begin());
  }
}

Tensor param_zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor param_full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from(std::move(shape), std::vector<double>(n, value), true);
}

Tensor param_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  const std::size_t n = shape_numel(shape);
  return Tensor::from(std::move(shape), rng.uniforms(n, -bound, bound), true);
}

Tensor param_normal(Shape shape, double stddev, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from(std::move(shape), rng.normals(n, stddev), true);
}

void Adam::step(ParameterSet& params) { step(params.list()); }

void Adam::step(std::vector<Parameter>& params) {
  for (const auto& p : params)
    if (!p.tensor.has_grad()) throw ContractError("adam: parameter '" + p.name + "' has no gradient");
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (auto& p : params) {
    auto& st = state_[p.tensor.id()];
    const std::size_t n = p.tensor.numel();
    if (st.m.size() != n) {
      st.m.assign(n, 0.0);
      st.v.assign(n, 0.0);
    }
    auto g = p.tensor.grad();
    auto w = p.tensor.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g[i];
      st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = st.m[i] / c1;
      const double vhat = st.v[i] / c2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double grad_norm(const ParameterSet& params) {
  double ss = 0.0;
  for (const auto& p : params.list()) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) ss += g * g;
  }
  return std::sqrt(ss);
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& p : params.list()) {
      if (!p.tensor.has_grad()) continue;
      for (double& g : p.tensor.mutable_grad()) g *= f;
    }
  }
  return norm;
}

}  // namespace lps
