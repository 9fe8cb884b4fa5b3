#include "lps/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lps::kernels {

namespace {

constexpr std::size_t kRowChunk = 64;
constexpr std::size_t kColBlock = 256;
constexpr std::size_t kDepthBlock = 128;

// c[i, j0:j1] += sum_{p in [p0, p1)} a[i, p] * b[p, j0:j1] for i in [i0, i1).
inline void block_update(const double* a, const double* b, double* c, std::size_t k,
                         std::size_t n, std::size_t i0, std::size_t i1, std::size_t j0,
                         std::size_t j1, std::size_t p0, std::size_t p1) {
  for (std::size_t i = i0; i < i1; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = p0; p < p1; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = j0; j < j1; ++j) crow[j] += aip * brow[j];
    }
  }
}

inline void tile_task(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n, std::size_t jb, std::size_t ib) {
  const std::size_t j0 = jb * kColBlock;
  const std::size_t j1 = std::min(n, j0 + kColBlock);
  const std::size_t i0 = ib * kRowChunk;
  const std::size_t i1 = std::min(m, i0 + kRowChunk);
  for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
    block_update(a, b, c, k, n, i0, i1, j0, j1, p0, std::min(k, p0 + kDepthBlock));
  }
}

void gemm_driver(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n, bool parallel) {
  const std::size_t col_blocks = (n + kColBlock - 1) / kColBlock;
  const std::size_t row_chunks = (m + kRowChunk - 1) / kRowChunk;
  const long long tasks = static_cast<long long>(col_blocks * row_chunks);
  const bool worth_it = parallel && (m * k * n > (1u << 16)) && tasks > 1;
#pragma omp parallel for schedule(static) if (worth_it)
  for (long long t = 0; t < tasks; ++t) {
    const std::size_t jb = static_cast<std::size_t>(t) / row_chunks;
    const std::size_t ib = static_cast<std::size_t>(t) % row_chunks;
    tile_task(a, b, c, m, k, n, jb, ib);
  }
}

void transpose_driver(const double* in, double* out, std::size_t rows, std::size_t cols,
                      bool parallel) {
  constexpr std::size_t kTile = 32;
  const long long row_tiles = static_cast<long long>((rows + kTile - 1) / kTile);
  const bool worth_it = parallel && rows * cols > (1u << 16);
#pragma omp parallel for schedule(static) if (worth_it)
  for (long long rt = 0; rt < row_tiles; ++rt) {
    const std::size_t r0 = static_cast<std::size_t>(rt) * kTile;
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t cc = c0; cc < c1; ++cc) out[cc * rows + r] = in[r * cols + cc];
    }
  }
}

void gemm_impl(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate, bool parallel) {
  if (!accumulate) std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * n), 0.0);
  if (m == 0 || n == 0 || k == 0) return;
  gemm_driver(a.data(), b.data(), c.data(), m, k, n, parallel);
}

void gemm_tn_impl(std::span<const double> a, std::span<const double> b, std::span<double> c,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate, bool parallel) {
  std::vector<double> at(m * k);
  transpose_driver(a.data(), at.data(), k, m, parallel);
  gemm_impl(at, b, c, m, k, n, accumulate, parallel);
}

void gemm_nt_impl(std::span<const double> a, std::span<const double> b, std::span<double> c,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate, bool parallel) {
  std::vector<double> bt(k * n);
  transpose_driver(b.data(), bt.data(), n, k, parallel);
  gemm_impl(a, bt, c, m, k, n, accumulate, parallel);
}

void axpy_impl(double alpha, std::span<const double> x, std::span<double> y, bool parallel) {
  const long long n = static_cast<long long>(x.size());
  const bool worth_it = parallel && n > (1 << 15);
#pragma omp parallel for schedule(static) if (worth_it)
  for (long long i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] += alpha * x[static_cast<std::size_t>(i)];
}

}  // namespace

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  gemm_impl(a, b, c, m, k, n, accumulate, true);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  gemm_tn_impl(a, b, c, m, k, n, accumulate, true);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  gemm_nt_impl(a, b, c, m, k, n, accumulate, true);
}

void transpose(std::span<const double> in, std::span<double> out, std::size_t rows,
               std::size_t cols) {
  transpose_driver(in.data(), out.data(), rows, cols, true);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  axpy_impl(alpha, x, y, true);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

// Plain textbook loops. Slow, obviously correct; the reference the blocked
// OpenMP kernels are checked against.

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = s;
    }
  }
}

void transpose(std::span<const double> in, std::span<double> out, std::size_t rows,
               std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t cc = 0; cc < cols; ++cc) out[cc * rows + r] = in[r * cols + cc];
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace serial

}  // namespace lps::kernels
