#include "lps/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "lps/errors.hpp"

namespace lps {

// ---- MLP ---------------------------------------------------------------------

Mlp::Mlp(const MlpConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.layer_dims.size() < 2) throw ContractError("mlp: need at least input and output dims");
  for (std::size_t d : cfg.layer_dims)
    if (d == 0) throw ContractError("mlp: layer dims must be positive");
  for (std::size_t l = 0; l + 1 < cfg.layer_dims.size(); ++l)
    layers_.emplace_back(cfg.layer_dims[l], cfg.layer_dims[l + 1], rng, params_,
                         "fc" + std::to_string(l));
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x.rank() == 2 ? x : reshape(x, {1, x.numel()});
  if (h.cols() != in_dim())
    throw ContractError("mlp: expected input width " + std::to_string(in_dim()) + ", got " +
                        shape_str(x.shape()));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = layers_[l](h);
    if (l + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

// ---- Transformer ---------------------------------------------------------------

Transformer::Transformer(const TransformerConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.heads == 0 || cfg.hidden % cfg.heads != 0)
    throw ContractError("transformer: hidden must be divisible by heads");
  const std::size_t h = cfg.hidden;
  embed_ = Linear(cfg.token_dim, h, rng, params_, "embed");
  pos_ = params_.add("pos", param_normal({cfg.token_count, h}, 0.02, rng));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "block" + std::to_string(l);
    Block b;
    b.ln1 = LayerNorm(h, params_, p + ".ln1");
    b.q = Linear(h, h, rng, params_, p + ".q");
    b.k = Linear(h, h, rng, params_, p + ".k");
    b.v = Linear(h, h, rng, params_, p + ".v");
    b.o = Linear(h, h, rng, params_, p + ".o");
    b.ln2 = LayerNorm(h, params_, p + ".ln2");
    b.ff1 = Linear(h, h * cfg.ff_mult, rng, params_, p + ".ff1");
    b.ff2 = Linear(h * cfg.ff_mult, h, rng, params_, p + ".ff2");
    blocks_.push_back(std::move(b));
  }
  final_ln_ = LayerNorm(h, params_, "final_ln");
  head1_ = Linear(h, h, rng, params_, "head1");
  head2_ = Linear(h, cfg.out_dim, rng, params_, "head2");
}

Tensor Transformer::embed(const Tensor& raw) const { return embed_(raw); }

Tensor Transformer::forward(const Tensor& tokens, std::size_t batch) const {
  const std::size_t m = cfg_.token_count, h = cfg_.hidden;
  if (tokens.rank() != 2 || tokens.rows() != batch * m || tokens.cols() != h)
    throw ContractError("transformer: expected tokens of shape [" + std::to_string(batch * m) +
                        ", " + std::to_string(h) + "], got " + shape_str(tokens.shape()));
  std::vector<Tensor> pos_rows(batch, pos_);
  Tensor x = tokens + (batch == 1 ? pos_ : concat(pos_rows, 0));
  const std::size_t dh = h / cfg_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const Block& b : blocks_) {
    const Tensor a = b.ln1(x);
    const Tensor q = b.q(a), k = b.k(a), v = b.v(a);
    std::vector<Tensor> seqs;
    for (std::size_t s = 0; s < batch; ++s) {
      const Tensor qs = slice_rows(q, s * m, m), ks = slice_rows(k, s * m, m),
                   vs = slice_rows(v, s * m, m);
      std::vector<Tensor> heads;
      for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
        const Tensor qh = slice_cols(qs, hd * dh, dh);
        const Tensor kh = slice_cols(ks, hd * dh, dh);
        const Tensor vh = slice_cols(vs, hd * dh, dh);
        const Tensor att = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
        heads.push_back(matmul(att, vh));
      }
      seqs.push_back(concat(heads, 1));
    }
    x = x + b.o(batch == 1 ? seqs[0] : concat(seqs, 0));
    x = x + b.ff2(gelu(b.ff1(b.ln2(x))));
  }
  return x;
}

Tensor Transformer::head(const Tensor& hidden) const {
  return head2_(gelu(head1_(final_ln_(hidden))));
}

Tensor Transformer::run(const Tensor& raw, std::size_t batch) const {
  return head(forward(embed(raw), batch));
}

// ---- tokenization -------------------------------------------------------------

Tensor chunk_tokens(const Tensor& array, std::size_t patch) {
  if (array.rank() != 2 || patch == 0) throw ContractError("chunk_tokens: expected a 2-D array");
  const std::size_t r = array.rows(), c = array.cols();
  const std::size_t pr = (r + patch - 1) / patch, pc = (c + patch - 1) / patch;
  const std::size_t m = pr * pc, d = patch * patch;
  // Gather matrix [m * d, r * c] so the map stays differentiable.
  std::vector<double> sel(m * d * r * c, 0.0);
  for (std::size_t bi = 0; bi < pr; ++bi)
    for (std::size_t bj = 0; bj < pc; ++bj)
      for (std::size_t a = 0; a < patch; ++a)
        for (std::size_t b = 0; b < patch; ++b) {
          const std::size_t i = bi * patch + a, j = bj * patch + b;
          if (i >= r || j >= c) continue;
          const std::size_t row = (bi * pc + bj) * d + a * patch + b;
          sel[row * (r * c) + i * c + j] = 1.0;
        }
  const Tensor s = Tensor::from({m * d, r * c}, std::move(sel));
  return reshape(matmul(s, reshape(array, {r * c, 1})), {m, d});
}

Tensor unchunk_tokens(const Tensor& tokens, std::size_t rows, std::size_t cols, std::size_t patch) {
  if (patch == 0 || rows % patch != 0 || cols % patch != 0)
    throw ContractError("unchunk_tokens: array extents must be divisible by the patch size");
  const std::size_t pc = cols / patch, d = patch * patch;
  const std::size_t m = (rows / patch) * pc;
  if (tokens.rows() != m || tokens.cols() != d)
    throw ContractError("unchunk_tokens: expected [" + std::to_string(m) + ", " + std::to_string(d) +
                        "] tokens, got " + shape_str(tokens.shape()));
  std::vector<std::size_t> src(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      src[i * cols + j] = ((i / patch) * pc + j / patch) * d + (i % patch) * patch + (j % patch);
  return reshape(gather_rows(reshape(tokens, {m * d, 1}), src), {rows, cols});
}

Tensor tokenize_graph(const Graph& g, std::size_t patch) {
  if (patch == 0 || g.n % patch != 0)
    throw ContractError("tokenize_graph: node count " + std::to_string(g.n) +
                        " is not divisible by patch " + std::to_string(patch));
  if (g.node_features.cols() != 1)
    throw ContractError("tokenize_graph: expects one feature channel");
  std::vector<double> diag(g.n * g.n, 0.0);
  for (std::size_t i = 0; i < g.n; ++i) diag[i * g.n + i] = 1.0;
  const Tensor packed =
      g.adjacency + Tensor::from({g.n, g.n}, std::move(diag)) * transpose(g.node_features);
  return chunk_tokens(packed, patch);
}

Tensor tokenize_nbody(const Tensor& positions, const Tensor& velocities, const Tensor& charges) {
  const std::size_t n = positions.rows();
  if (positions.shape() != Shape{n, 3} || velocities.shape() != Shape{n, 3} || charges.numel() != n)
    throw ContractError("tokenize_nbody: expected n x 3 positions/velocities and n charges");
  const Tensor c = reshape(charges, {n, 1});
  const Tensor cc = reshape(matmul(c, transpose(c)), {n * n, 1});
  const Tensor sq = sum(positions * positions, 1);
  const Tensor dist = sq + transpose(sq) - scale(matmul(positions, transpose(positions)), 2.0);
  std::vector<double> e(n * n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) e[(i * n + i) * n + i] = 1.0;
  const Tensor diag = Tensor::from({n * n, n}, std::move(e));
  return concat({cc, reshape(dist, {n * n, 1}), matmul(diag, positions), matmul(diag, velocities)}, 1);
}

Tensor detokenize_nodes(const Tensor& token_outputs, std::size_t n) {
  if (token_outputs.rows() != n * n)
    throw ContractError("detokenize_nodes: expected " + std::to_string(n * n) + " tokens, got " +
                        shape_str(token_outputs.shape()));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i * (n + 1);
  return gather_rows(token_outputs, idx);
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

void put_le(std::ofstream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

double get_le(const unsigned char* buf) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const ParameterSet& params, const std::string& path) {
  std::ofstream bin(path + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + path + ".bin");
  nlohmann::json manifest;
  manifest["format"] = "f64-le";
  manifest["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : params.list()) {
    for (double v : p.tensor.data()) put_le(bin, v);
    manifest["tensors"].push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}});
    offset += p.tensor.numel() * 8;
  }
  std::ofstream js(path + ".json");
  if (!js) throw std::runtime_error("cannot write " + path + ".json");
  js << manifest.dump(2) << '\n';
}

void load_checkpoint(ParameterSet& params, const std::string& path) {
  std::ifstream js(path + ".json");
  if (!js) throw std::runtime_error("cannot read " + path + ".json");
  const nlohmann::json manifest = nlohmann::json::parse(js);
  std::ifstream bin(path + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + path + ".bin");
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name");
    if (!params.contains(name)) throw ContractError("checkpoint tensor '" + name + "' is not a parameter");
    Tensor& t = params.get(name);
    const Shape shape = entry.at("shape").get<Shape>();
    if (shape != t.shape())
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) +
                           ", parameter has " + shape_str(t.shape()));
    const std::size_t offset = entry.at("offset");
    if (offset + t.numel() * 8 > blob.size()) throw ContractError("checkpoint blob is truncated");
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = get_le(blob.data() + offset + 8 * i);
  }
}

}  // namespace lps
