#pragma once

// Group-agnostic base functions: a flat-vector MLP and a token transformer.

#include <string>
#include <vector>

#include "lps/groups.hpp"
#include "lps/layers.hpp"

namespace lps {

struct MlpConfig {
  std::vector<std::size_t> layer_dims;  // input, hidden..., output
};

class Mlp {
 public:
  Mlp(const MlpConfig& cfg, Rng& rng);

  const MlpConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::size_t in_dim() const { return cfg_.layer_dims.front(); }
  std::size_t out_dim() const { return cfg_.layer_dims.back(); }
  std::vector<Linear>& layers() { return layers_; }

  // x is [batch, in] (or a length-in vector); returns [batch, out].
  Tensor forward(const Tensor& x) const;

 private:
  MlpConfig cfg_;
  ParameterSet params_;
  std::vector<Linear> layers_;
};

struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t hidden = 32;
  std::size_t heads = 4;
  std::size_t ff_mult = 2;
  std::size_t token_count = 25;
  std::size_t token_dim = 8;
  std::size_t out_dim = 3;
};

// Encoder-only PreLN transformer with a learned positional embedding.
// Full pipeline: embed (linear on raw tokens) -> forward -> head (LN + MLP).
class Transformer {
 public:
  Transformer(const TransformerConfig& cfg, Rng& rng);

  const TransformerConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Raw tokens [batch * m, token_dim] -> [batch * m, hidden].
  Tensor embed(const Tensor& raw) const;
  // Hidden tokens [batch * m, hidden] -> same shape; batch sequences of m tokens.
  Tensor forward(const Tensor& tokens, std::size_t batch = 1) const;
  // Hidden tokens -> [batch * m, out_dim].
  Tensor head(const Tensor& hidden) const;
  // embed -> forward -> head.
  Tensor run(const Tensor& raw, std::size_t batch = 1) const;

  const Tensor& positional() const { return pos_; }

 private:
  struct Block {
    LayerNorm ln1;
    Linear q, k, v, o;
    LayerNorm ln2;
    Linear ff1, ff2;
  };
  TransformerConfig cfg_;
  ParameterSet params_;
  Linear embed_;
  Tensor pos_;
  std::vector<Block> blocks_;
  LayerNorm final_ln_;
  Linear head1_, head2_;
};

// Splits a 2-D array [R, C] (zero padded to multiples of `patch`) into row-major
// patch x patch chunks, one flattened chunk per token: [m, patch * patch].
Tensor chunk_tokens(const Tensor& array, std::size_t patch);
// Inverse of chunk_tokens for an R x C array (no padding allowed).
Tensor unchunk_tokens(const Tensor& tokens, std::size_t rows, std::size_t cols, std::size_t patch);
// Adjacency with node features (one channel) written on the diagonal, then chunked.
Tensor tokenize_graph(const Graph& g, std::size_t patch);

// n-body tokens: the n x n x 8 array of (charge product, squared distance,
// position on the diagonal, velocity on the diagonal), flattened to n*n tokens.
// Differentiable in all inputs. positions/velocities are n x 3, charges n x 1.
Tensor tokenize_nbody(const Tensor& positions, const Tensor& velocities, const Tensor& charges);
// Picks the diagonal tokens (i, i) out of [n*n, c] outputs: [n, c].
Tensor detokenize_nodes(const Tensor& token_outputs, std::size_t n);

// Little-endian f64 blob `<path>.bin` plus JSON manifest `<path>.json`.
void save_checkpoint(const ParameterSet& params, const std::string& path);
void load_checkpoint(ParameterSet& params, const std::string& path);

}  // namespace lps
