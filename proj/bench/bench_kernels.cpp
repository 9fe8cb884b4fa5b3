#include <benchmark/benchmark.h>

#include <vector>

#include "lps/datasets.hpp"
#include "lps/kernels.hpp"
#include "lps/rng.hpp"
#include "lps/symmetrization.hpp"

namespace {

struct Operands {
  std::vector<double> a, b, c;
  explicit Operands(std::size_t n) : c(n * n) {
    lps::Rng rng(1);
    a = rng.normals(n * n);
    b = rng.normals(n * n);
  }
};

void BM_GemmParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Operands op(n);
  for (auto _ : state) {
    lps::kernels::gemm(op.a, op.b, op.c, n, n, n);
    benchmark::DoNotOptimize(op.c.data());
  }
  state.SetItemsProcessed(static_cast<long long>(state.iterations() * n * n * n));
}

void BM_GemmSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Operands op(n);
  for (auto _ : state) {
    lps::kernels::serial::gemm(op.a, op.b, op.c, n, n, n);
    benchmark::DoNotOptimize(op.c.data());
  }
  state.SetItemsProcessed(static_cast<long long>(state.iterations() * n * n * n));
}

void BM_GemmTnParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Operands op(n);
  for (auto _ : state) {
    lps::kernels::gemm_tn(op.a, op.b, op.c, n, n, n);
    benchmark::DoNotOptimize(op.c.data());
  }
}

void BM_GemmTnSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Operands op(n);
  for (auto _ : state) {
    lps::kernels::serial::gemm_tn(op.a, op.b, op.c, n, n, n);
    benchmark::DoNotOptimize(op.c.data());
  }
}

void BM_SymmetrizedForward(benchmark::State& state) {
  const auto samples = static_cast<std::size_t>(state.range(0));
  lps::Rng rng(3);
  lps::Mlp mlp(lps::MlpConfig{{132, 1024, 512, 1024, 1}}, rng);
  lps::SnDistribution dist(lps::SnConfig{}, rng);
  lps::SymmetrizationConfig cfg;
  lps::GraphSymModel model(std::move(mlp), std::move(dist), cfg, lps::TaskKind::graph_invariant, 1);
  const lps::Graph g = lps::circulant_skip_link(11, 2);
  lps::NoGradGuard guard;
  for (auto _ : state) {
    lps::Rng r(5);
    benchmark::DoNotOptimize(model.estimate(g, samples, r).mean.item());
  }
}

}  // namespace

BENCHMARK(BM_GemmParallel)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_GemmSerial)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_GemmTnParallel)->Arg(256);
BENCHMARK(BM_GemmTnSerial)->Arg(256);
BENCHMARK(BM_SymmetrizedForward)->Arg(1)->Arg(10);

BENCHMARK_MAIN();
