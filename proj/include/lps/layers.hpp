#pragma once

#include <string>

#include "lps/optim.hpp"
#include "lps/tensor.hpp"

namespace lps {

// y = x W + b with W [in, out] and b [1, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, ParameterSet& params, const std::string& name,
         bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

// Per-feature normalization over the row (node) axis followed by an affine map.
struct RowAxisNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  RowAxisNorm() = default;
  RowAxisNorm(std::size_t features, ParameterSet& params, const std::string& name);
  Tensor operator()(const Tensor& x) const;
};

// Per-row normalization over the feature axis followed by an affine map.
struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(std::size_t features, ParameterSet& params, const std::string& name);
  Tensor operator()(const Tensor& x) const;
};

}  // namespace lps
