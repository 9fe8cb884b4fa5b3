#pragma once

#include <map>
#include <string>
#include <vector>

#include "lps/rng.hpp"
#include "lps/tensor.hpp"

namespace lps {

struct Parameter {
  std::string name;
  Tensor tensor;
};

// Named trainable tensors of one model. Names are unique.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor tensor);
  // Adds every parameter of `other`, prefixing names with `prefix`.
  void extend(const std::string& prefix, const ParameterSet& other);

  const std::vector<Parameter>& list() const { return params_; }
  std::vector<Parameter>& list() { return params_; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  // Replaces values of parameters present in both sets (matching name and shape).
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

// Leaf tensors with requires_grad and the usual initializers.
Tensor param_zeros(Shape shape);
Tensor param_full(Shape shape, double value);
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor param_uniform(Shape shape, std::size_t fan_in, Rng& rng);
Tensor param_normal(Shape shape, double stddev, Rng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One bias-corrected update of every parameter. Throws ContractError if a
  // parameter has no gradient buffer.
  void step(ParameterSet& params);
  void step(std::vector<Parameter>& params);

  long long steps() const { return step_; }
  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  long long step_ = 0;
  std::map<const void*, Moments> state_;
};

// Global L2 norm over all parameter gradients.
double grad_norm(const ParameterSet& params);
// Rescales gradients so their global norm is at most max_norm; returns the
// norm before clipping.
double clip_grad_norm(ParameterSet& params, double max_norm);

}  // namespace lps
