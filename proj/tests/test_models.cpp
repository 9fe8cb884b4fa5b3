#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "lps/errors.hpp"
#include "lps/models.hpp"
#include "lps/oracles.hpp"

using namespace lps;

namespace {

void fill_params(ParameterSet& ps, double value) {
  for (auto& p : ps.list()) {
    auto d = p.tensor.mutable_data();
    std::fill(d.begin(), d.end(), value);
  }
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

TEST_CASE("mlp with zero weights outputs zero") {
  Rng rng(1);
  Mlp mlp(MlpConfig{{5, 16, 16, 3}}, rng);
  fill_params(mlp.params(), 0.0);
  const Tensor y = mlp.forward(Tensor::from({2, 5}, rng.normals(10)));
  CHECK(y.shape() == Shape{2, 3});
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("single identity layer passes inputs through") {
  Rng rng(2);
  Mlp mlp(MlpConfig{{3, 3}}, rng);
  auto& layer = mlp.layers().front();
  auto w = layer.weight.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  auto b = layer.bias.mutable_data();
  std::fill(b.begin(), b.end(), 0.0);
  const std::vector<double> x{1.5, -2.0, 0.25};
  CHECK(mlp.forward(Tensor::from({1, 3}, x)).to_vector() == x);
}

TEST_CASE("mlp rejects wrong input width") {
  Rng rng(3);
  Mlp mlp(MlpConfig{{4, 8, 2}}, rng);
  CHECK_THROWS(mlp.forward(Tensor::zeros({1, 5})));
}

TEST_CASE("mlp is not permutation equivariant") {
  Rng rng(4);
  Mlp mlp(MlpConfig{{4, 16, 4}}, rng);
  const std::vector<double> x{0.3, -1.2, 0.8, 2.0};
  const std::vector<double> xr{2.0, 0.8, -1.2, 0.3};
  auto y = mlp.forward(Tensor::from({1, 4}, x)).to_vector();
  std::reverse(y.begin(), y.end());
  CHECK(oracle::max_abs_diff(mlp.forward(Tensor::from({1, 4}, xr)).to_vector(), y) > 1e-3);
}

TEST_CASE("transformer with zeroed block outputs adds only the positional embedding") {
  Rng rng(5);
  TransformerConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.token_count = 4;
  Transformer t(cfg, rng);
  for (auto& p : t.params().list())
    if (p.name.find("block") != std::string::npos &&
        (p.name.find(".o.") != std::string::npos || p.name.find(".ff2.") != std::string::npos)) {
      auto d = p.tensor.mutable_data();
      std::fill(d.begin(), d.end(), 0.0);
    }
  const Tensor h = Tensor::from({4, 8}, rng.normals(32));
  CHECK(oracle::max_abs_diff(t.forward(h).to_vector(), (h + t.positional()).to_vector()) == 0.0);
}

TEST_CASE("transformer is not permutation equivariant") {
  Rng rng(6);
  TransformerConfig cfg;
  cfg.hidden = 16;
  cfg.token_count = 4;
  cfg.token_dim = 3;
  Transformer t(cfg, rng);
  const Tensor x = Tensor::from({4, 3}, rng.normals(12));
  const Permutation p{{1, 0, 2, 3}};
  const Tensor moved = t.run(permute_rows(p, x));
  CHECK(oracle::max_abs_diff(moved.to_vector(), permute_rows(p, t.run(x)).to_vector()) > 1e-6);
  CHECK(all_finite(moved));
}

TEST_CASE("transformer batches sequences independently") {
  Rng rng(7);
  TransformerConfig cfg;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.token_count = 3;
  cfg.token_dim = 2;
  Transformer t(cfg, rng);
  const std::vector<double> a = rng.normals(6), b = rng.normals(6);
  std::vector<double> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const auto both = t.run(Tensor::from({6, 2}, ab), 2).to_vector();
  auto ya = t.run(Tensor::from({3, 2}, a)).to_vector();
  const auto yb = t.run(Tensor::from({3, 2}, b)).to_vector();
  ya.insert(ya.end(), yb.begin(), yb.end());
  CHECK(oracle::max_abs_diff(both, ya) <= 1e-12);
}

TEST_CASE("token counts") {
  CHECK(chunk_tokens(Tensor::zeros({4, 4}), 2).shape() == Shape{4, 4});
  CHECK(chunk_tokens(Tensor::zeros({5, 5}), 2).shape() == Shape{9, 4});
  Rng rng(8);
  const Tensor x = Tensor::from({5, 3}, rng.normals(15));
  const Tensor v = Tensor::from({5, 3}, rng.normals(15));
  const Tensor q = Tensor::from({5, 1}, {1, -1, 1, -1, 1});
  CHECK(tokenize_nbody(x, v, q).shape() == Shape{25, 8});
  CHECK(detokenize_nodes(Tensor::zeros({25, 3}), 5).shape() == Shape{5, 3});
}

TEST_CASE("chunking round trip") {
  Rng rng(9);
  const Tensor a = Tensor::from({4, 6}, rng.normals(24));
  CHECK(unchunk_tokens(chunk_tokens(a, 2), 4, 6, 2).to_vector() == a.to_vector());
  CHECK_THROWS_AS(unchunk_tokens(Tensor::zeros({4, 4}), 5, 5, 2), ContractError);
}

TEST_CASE("graph tokens carry node features on the diagonal") {
  Graph g = Graph::from_edges(2, {{0, 1}});
  g.node_features = Tensor::from({2, 1}, {3.0, 4.0});
  CHECK(tokenize_graph(g, 2).to_vector() == std::vector<double>{3.0, 1.0, 1.0, 4.0});
}

TEST_CASE("nbody token layout") {
  const Tensor x = Tensor::from({2, 3}, {1, 0, 0, 0, 2, 0});
  const Tensor v = Tensor::from({2, 3}, {0, 0, 1, 1, 1, 1});
  const Tensor q = Tensor::from({2, 1}, {1, -1});
  const Tensor t = tokenize_nbody(x, v, q);
  CHECK(t.at(1, 0) == -1.0);
  CHECK(t.at(1, 1) == doctest::Approx(5.0));
  CHECK(t.at(0, 1) == 0.0);
  CHECK(t.at(3, 0) == 1.0);
  CHECK(t.at(3, 3) == 2.0);
  CHECK(t.at(3, 4) == 0.0);
  CHECK(t.at(3, 7) == 1.0);
  CHECK(t.at(1, 2) == 0.0);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(10);
  Mlp a(MlpConfig{{3, 5, 2}}, rng);
  Mlp b(MlpConfig{{3, 5, 2}}, rng);
  const auto path = (std::filesystem::temp_directory_path() / "lps_ckpt_test").string();
  save_checkpoint(a.params(), path);
  load_checkpoint(b.params(), path);
  const Tensor x = Tensor::from({1, 3}, {0.1, 0.2, 0.3});
  CHECK(a.forward(x).to_vector() == b.forward(x).to_vector());
  Mlp c(MlpConfig{{3, 4, 2}}, rng);
  CHECK_THROWS(load_checkpoint(c.params(), path));
  std::filesystem::remove(path + ".bin");
  std::filesystem::remove(path + ".json");
}
