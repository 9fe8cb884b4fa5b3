#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace lps {

// Seeded 64-bit generator. Substreams are derived from (seed, keys...) with a
// splitmix64 hash so that per-batch and per-sample draws are reproducible
// independently of evaluation order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::vector<double> normals(std::size_t count, double stddev = 1.0) {
    std::vector<double> out(count);
    for (double& v : out) v = normal(0.0, stddev);
    return out;
  }
  std::vector<double> uniforms(std::size_t count, double lo, double hi) {
    std::vector<double> out(count);
    for (double& v : out) v = uniform(lo, hi);
    return out;
  }

  // Independent stream keyed by this generator's seed and `key`.
  Rng substream(std::uint64_t key) const { return Rng(mix(seed_ ^ mix(key + 0x9e37u))); }
  Rng substream(std::uint64_t k1, std::uint64_t k2) const { return substream(k1).substream(k2); }

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace lps
