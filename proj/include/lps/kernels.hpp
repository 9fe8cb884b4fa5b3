#pragma once

// Dense row-major kernels used by the tensor engine.
//
// The OpenMP kernels partition output tiles across threads and walk the
// reduction index of every output element in ascending order, so results do not
// depend on the thread count. lps::kernels::serial holds naive reference loops
// that the tests and the benchmark compare against.

#include <cstddef>
#include <span>

namespace lps::kernels {

// c[m x n] = a[m x k] * b[k x n]   (c += ... when accumulate is true)
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// c[m x n] = a[k x m]^T * b[k x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// c[m x n] = a[m x k] * b[n x k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// out[cols x rows] = in[rows x cols]^T
void transpose(std::span<const double> in, std::span<double> out, std::size_t rows,
               std::size_t cols);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void transpose(std::span<const double> in, std::span<double> out, std::size_t rows,
               std::size_t cols);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace serial

}  // namespace lps::kernels
