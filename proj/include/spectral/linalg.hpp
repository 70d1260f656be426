#pragma once

// Dense row-major GEMM kernel shared by the matrix and tensor code paths.

#include <cstddef>

namespace spectral::linalg {

enum class Op { N, T };

/// C(m x n) = alpha * op(A)(m x k) * op(B)(k x n) + beta * C.
/// Leading dimensions are row strides of the stored (untransposed) arrays.
inline void gemm(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
                 const double *a, std::size_t lda, const double *b, std::size_t ldb, double beta,
                 double *c, std::size_t ldc) {
  if (beta != 1.0) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        c[i * ldc + j] = beta == 0.0 ? 0.0 : beta * c[i * ldc + j];
  }
  if (op_a == Op::N && op_b == Op::N) {
    for (std::size_t i = 0; i < m; ++i) {
      double *ci = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = alpha * a[i * lda + p];
        if (av == 0.0)
          continue;
        const double *bp = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j)
          ci[j] += av * bp[j];
      }
    }
  } else if (op_a == Op::N && op_b == Op::T) {
    for (std::size_t i = 0; i < m; ++i) {
      const double *ai = a + i * lda;
      for (std::size_t j = 0; j < n; ++j) {
        const double *bj = b + j * ldb;
        // Four partial sums let the compiler vectorize the reduction.
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        std::size_t p = 0;
        for (; p + 4 <= k; p += 4) {
          s0 += ai[p] * bj[p];
          s1 += ai[p + 1] * bj[p + 1];
          s2 += ai[p + 2] * bj[p + 2];
          s3 += ai[p + 3] * bj[p + 3];
        }
        for (; p < k; ++p)
          s0 += ai[p] * bj[p];
        c[i * ldc + j] += alpha * ((s0 + s1) + (s2 + s3));
      }
    }
  } else if (op_a == Op::T && op_b == Op::N) {
    for (std::size_t p = 0; p < k; ++p) {
      const double *ap = a + p * lda;
      const double *bp = b + p * ldb;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = alpha * ap[i];
        if (av == 0.0)
          continue;
        double *ci = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j)
          ci[j] += av * bp[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p)
          s += a[p * lda + i] * b[j * ldb + p];
        c[i * ldc + j] += alpha * s;
      }
  }
}

} // namespace spectral::linalg
