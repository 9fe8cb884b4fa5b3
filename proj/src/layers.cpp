#include "lps/layers.hpp"

#include "lps/errors.hpp"

namespace lps {

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, ParameterSet& params,
               const std::string& name, bool with_bias) {
  weight = params.add(name + ".weight", param_uniform({in, out}, in, rng));
  if (with_bias) bias = params.add(name + ".bias", param_uniform({1, out}, in, rng));
}

Tensor Linear::operator()(const Tensor& x) const {
  if (x.cols() != weight.rows())
    throw ContractError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                        shape_str(weight.shape()));
  Tensor y = matmul(x, weight);
  return bias.defined() ? y + bias : y;
}

RowAxisNorm::RowAxisNorm(std::size_t features, ParameterSet& params, const std::string& name) {
  gamma = params.add(name + ".gamma", param_full({1, features}, 1.0));
  beta = params.add(name + ".beta", param_zeros({1, features}));
}

Tensor RowAxisNorm::operator()(const Tensor& x) const {
  const Tensor centered = x - mean(x, 0);
  const Tensor var = mean(centered * centered, 0);
  return centered / sqrt(add_scalar(var, eps)) * gamma + beta;
}

LayerNorm::LayerNorm(std::size_t features, ParameterSet& params, const std::string& name) {
  gamma = params.add(name + ".gamma", param_full({1, features}, 1.0));
  beta = params.add(name + ".beta", param_zeros({1, features}));
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  const Tensor centered = x - mean(x, 1);
  const Tensor var = mean(centered * centered, 1);
  return centered / sqrt(add_scalar(var, eps)) * gamma + beta;
}

}  // namespace lps
