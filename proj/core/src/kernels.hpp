#pragma once

// Row-independent dense kernels. Every output row is produced by the same
// instruction sequence whatever the number of rows, so a row computed inside
// a batch is bit-identical to the same row computed alone.

#include <algorithm>
#include <cstddef>

namespace mcdrive::detail {

inline constexpr std::size_t kColumnBlock = 32;

// c[m x n] = a[m x k] * b[k x n] (+ bias[n]).
inline void gemm_rows(const double* a, std::size_t m, std::size_t k, const double* b,
                      std::size_t n, const double* bias, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    std::size_t j0 = 0;
    for (; j0 + kColumnBlock <= n; j0 += kColumnBlock) {
      double acc[kColumnBlock];
      for (std::size_t j = 0; j < kColumnBlock; ++j) acc[j] = bias ? bias[j0 + j] : 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = ai[kk];
        if (aik == 0.0) continue;
        const double* bk = b + kk * n + j0;
        for (std::size_t j = 0; j < kColumnBlock; ++j) acc[j] += aik * bk[j];
      }
      std::copy(acc, acc + kColumnBlock, ci + j0);
    }
    if (j0 < n) {
      const std::size_t rem = n - j0;
      double acc[kColumnBlock];
      for (std::size_t j = 0; j < rem; ++j) acc[j] = bias ? bias[j0 + j] : 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = ai[kk];
        if (aik == 0.0) continue;
        const double* bk = b + kk * n + j0;
        for (std::size_t j = 0; j < rem; ++j) acc[j] += aik * bk[j];
      }
      std::copy(acc, acc + rem, ci + j0);
    }
  }
}

// g[k x n] += a[m x k]^T * d[m x n]
inline void gemm_at_acc(const double* a, std::size_t m, std::size_t k, const double* d,
                        std::size_t n, double* g) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* di = d + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = ai[kk];
      if (aik == 0.0) continue;
      double* gk = g + kk * n;
      for (std::size_t j = 0; j < n; ++j) gk[j] += aik * di[j];
    }
  }
}

// c[m x k] = d[m x n] * w[k x n]^T, with w pre-transposed into wt[n x k].
inline void gemm_bt(const double* d, std::size_t m, std::size_t n, const double* wt,
                    std::size_t k, double* c) {
  gemm_rows(d, m, n, wt, k, nullptr, c);
}

}  // namespace mcdrive::detail
