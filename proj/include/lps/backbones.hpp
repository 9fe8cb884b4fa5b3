#pragma once

// Equivariant feature extractors feeding the group postprocessors.

#include <vector>

#include "lps/groups.hpp"
#include "lps/layers.hpp"

namespace lps {

// Appends node n connected to every other node, with feature row v [1, c].
Graph add_virtual_node(const Graph& g, const Tensor& v_feature);

struct GinConfig {
  std::size_t in_dim = 1;
  std::size_t hidden = 64;
  std::size_t layers = 3;
  std::size_t out_dim = 1;
};

// GIN stack: H <- MLP((A + (1 + e) I) H), ReLU between layers, where each MLP
// is Linear -> RowAxisNorm -> ReLU -> Linear.
class Gin {
 public:
  Gin(const GinConfig& cfg, Rng& rng);

  const GinConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const Tensor& virtual_feature() const { return virtual_; }

  // `g` carries the virtual node as its last row; h0 is (n+1) x in_dim.
  // Returns the per-node outputs of the n real nodes, shape [n, out_dim].
  Tensor forward(const Graph& g, const Tensor& h0) const;

 private:
  struct Layer {
    Tensor eps;
    Linear lin1;
    RowAxisNorm norm;
    Linear lin2;
  };
  GinConfig cfg_;
  ParameterSet params_;
  Tensor virtual_;
  std::vector<Layer> layers_;
};

struct VnConfig {
  std::size_t layers = 2;
  std::size_t channels = 16;
  std::size_t perm_heads = 8;
};

struct VnOutput {
  Tensor z_perm;  // [n, 1], invariant to rotations, permutes with points
  Tensor z_rot;   // [3, 3], columns rotate with the input, invariant to point order
};

// Vector-channel network. Features are stored as [channels, 3n]: row c holds
// the 3-vectors of channel c for every point. Channel mixing multiplies from
// the left and so commutes with rotations acting on each 3-block.
class VnLite {
 public:
  VnLite(const VnConfig& cfg, Rng& rng);

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // positions and velocities are n x 3 (positions centered); eps1, eps2 are n x 3 noise.
  VnOutput forward(const Tensor& positions, const Tensor& velocities, const Tensor& eps1,
                   const Tensor& eps2) const;

 private:
  struct Layer {
    Tensor mix;       // [C_out, C_in]
    Tensor mix_pool;  // [C_out, C_in], applied to the point-mean
    Tensor dir;       // [C_out, C_in], learned direction of the rectifier
  };
  VnConfig cfg_;
  ParameterSet params_;
  std::vector<Layer> layers_;
  Tensor rot_head;   // [3, C]
  Tensor perm_a;     // [H, C]
  Tensor perm_b;     // [H, C]
  Linear perm_out;   // H -> 1
};

}  // namespace lps
