#include "lps/backbones.hpp"

#include <cmath>

#include "lps/errors.hpp"

namespace lps {

Graph add_virtual_node(const Graph& g, const Tensor& v_feature) {
  const std::size_t n = g.n;
  if (v_feature.cols() != g.node_features.cols())
    throw ContractError("add_virtual_node: feature width mismatch");
  std::vector<double> a((n + 1) * (n + 1), 0.0);
  auto src = g.adjacency.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i * (n + 1) + j] = src[i * n + j];
    a[i * (n + 1) + n] = 1.0;
    a[n * (n + 1) + i] = 1.0;
  }
  Graph out;
  out.n = n + 1;
  out.adjacency = Tensor::from({n + 1, n + 1}, std::move(a));
  out.node_features = concat({g.node_features, reshape(v_feature, {1, v_feature.numel()})}, 0);
  return out;
}

Gin::Gin(const GinConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.layers < 1 || cfg.hidden < 1) throw ContractError("gin: layers and hidden must be >= 1");
  virtual_ = params_.add("virtual", param_zeros({1, cfg.in_dim}));
  std::size_t in = cfg.in_dim;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "conv" + std::to_string(l);
    const std::size_t out = l + 1 == cfg.layers ? cfg.out_dim : cfg.hidden;
    Layer layer;
    layer.eps = params_.add(p + ".eps", param_full({1, 1}, 0.1));
    layer.lin1 = Linear(in, cfg.hidden, rng, params_, p + ".lin1");
    layer.norm = RowAxisNorm(cfg.hidden, params_, p + ".norm");
    layer.lin2 = Linear(cfg.hidden, out, rng, params_, p + ".lin2");
    layers_.push_back(std::move(layer));
    in = out;
  }
}

Tensor Gin::forward(const Graph& g, const Tensor& h0) const {
  if (h0.rows() != g.n || h0.cols() != cfg_.in_dim || h0.rank() != 2)
    throw ContractError("gin: expected features of shape [" + std::to_string(g.n) + ", " +
                        std::to_string(cfg_.in_dim) + "], got " + shape_str(h0.shape()));
  if (g.n < 2) throw ContractError("gin: graph must include the virtual node");
  Tensor h = h0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const Tensor m = matmul(g.adjacency, h) + h * add_scalar(layer.eps, 1.0);
    h = layer.lin2(relu(layer.norm(layer.lin1(m))));
    if (l + 1 < layers_.size()) h = relu(h);
  }
  return slice_rows(h, 0, g.n - 1);
}

namespace {

// [3n, n] matrix summing each 3-block of a [C, 3n] feature into one column.
Tensor block_sum(std::size_t n) {
  std::vector<double> s(3 * n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < 3; ++a) s[(3 * i + a) * n + i] = 1.0;
  return Tensor::from({3 * n, n}, std::move(s));
}

// [3n, 3] matrix averaging the n 3-blocks.
Tensor block_mean(std::size_t n) {
  std::vector<double> s(9 * n, 0.0);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < 3; ++a) s[(3 * i + a) * 3 + a] = w;
  return Tensor::from({3 * n, 3}, std::move(s));
}

// [3, 3n] matrix tiling one 3-vector onto every point.
Tensor block_tile(std::size_t n) {
  std::vector<double> s(9 * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < 3; ++a) s[a * 3 * n + 3 * i + a] = 1.0;
  return Tensor::from({3, 3 * n}, std::move(s));
}

Tensor vn_param(std::size_t out, std::size_t in, Rng& rng) {
  return param_uniform({out, in}, in, rng);
}

}  // namespace

VnLite::VnLite(const VnConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.channels < 3) throw ContractError("vn: at least 3 vector channels required");
  std::size_t in = 2;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "vn" + std::to_string(l);
    Layer layer;
    layer.mix = params_.add(p + ".mix", vn_param(cfg.channels, in, rng));
    layer.mix_pool = params_.add(p + ".mix_pool", vn_param(cfg.channels, in, rng));
    layer.dir = params_.add(p + ".dir", vn_param(cfg.channels, in, rng));
    layers_.push_back(std::move(layer));
    in = cfg.channels;
  }
  rot_head = params_.add("rot_head", vn_param(3, in, rng));
  perm_a = params_.add("perm_a", vn_param(cfg.perm_heads, in, rng));
  perm_b = params_.add("perm_b", vn_param(cfg.perm_heads, in, rng));
  perm_out = Linear(cfg.perm_heads, 1, rng, params_, "perm_out");
}

VnOutput VnLite::forward(const Tensor& positions, const Tensor& velocities, const Tensor& eps1,
                         const Tensor& eps2) const {
  const std::size_t n = positions.rows();
  if (n < 1 || positions.rank() != 2) throw ContractError("vn: need at least one point");
  for (const Tensor* t : {&positions, &velocities, &eps1, &eps2})
    if (t->shape() != Shape{n, 3})
      throw ContractError("vn: expected [" + std::to_string(n) + ", 3] inputs, got " +
                          shape_str(t->shape()));
  const Tensor sum3 = block_sum(n);
  const Tensor pool = block_mean(n);
  const Tensor tile = block_tile(n);

  Tensor t = concat({reshape(positions + eps1, {1, 3 * n}), reshape(velocities + eps2, {1, 3 * n})}, 0);
  for (const Layer& layer : layers_) {
    const Tensor pooled = matmul(matmul(t, pool), tile);  // point mean broadcast back
    const Tensor q = matmul(layer.mix, t) + matmul(layer.mix_pool, pooled);
    const Tensor k = matmul(layer.dir, t);
    const Tensor qk = matmul(q * k, sum3);  // [C, n]
    const Tensor kk = add_scalar(matmul(k * k, sum3), 1e-6);
    const Tensor coef = neg(relu(neg(qk))) / kk;  // min(<q,k>, 0) / |k|^2
    t = q - matmul(coef, transpose(sum3)) * k;
  }
  VnOutput out;
  out.z_rot = transpose(matmul(matmul(rot_head, t), pool));
  const Tensor inner = matmul(matmul(perm_a, t) * matmul(perm_b, t), sum3);  // [H, n]
  out.z_perm = perm_out(transpose(inner));
  return out;
}

}  // namespace lps
