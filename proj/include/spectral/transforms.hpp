#pragma once

// Spectral transformation matrices (DCT-II, scaled DCT-III, DFT, inverse
// DFT) and the two-sided transforms built from them. Complex matrices are
// kept as separate real/imaginary parts so every layer parameter stays real.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "spectral/matrix.hpp"

namespace spectral {

enum class TransformKind { DctII, DctIIIInverse, DftForward, DftInverse, RandomNormalized };

/// How a complex transform result becomes a real feature map.
enum class ComplexOutput { Concat, Amplitude };

[[nodiscard]] constexpr std::string_view to_string(TransformKind k) noexcept {
  switch (k) {
  case TransformKind::DctII: return "dct2";
  case TransformKind::DctIIIInverse: return "dct3-inverse";
  case TransformKind::DftForward: return "dft";
  case TransformKind::DftInverse: return "idft";
  case TransformKind::RandomNormalized: return "rnd";
  }
  return "?";
}

[[nodiscard]] inline TransformKind transform_kind_from_string(std::string_view s) {
  if (s == "dct2" || s == "dct") return TransformKind::DctII;
  if (s == "dct3-inverse" || s == "idct") return TransformKind::DctIIIInverse;
  if (s == "dft") return TransformKind::DftForward;
  if (s == "idft") return TransformKind::DftInverse;
  if (s == "rnd") return TransformKind::RandomNormalized;
  throw std::invalid_argument("unknown transform kind '" + std::string(s) + "'");
}

[[nodiscard]] constexpr bool is_complex(TransformKind k) noexcept {
  return k == TransformKind::DftForward || k == TransformKind::DftInverse;
}

namespace detail {
inline void require_dims(const char *op, std::size_t a, std::size_t b) {
  if (a == 0 || b == 0)
    throw std::invalid_argument(std::string(op) + ": dimensions must be positive, got " +
                                std::to_string(a) + "x" + std::to_string(b));
}

/// (cos, sin) of 2 pi r / n, exact at quarter turns.
inline std::pair<double, double> unit_root(std::size_t r, std::size_t n) {
  if ((4 * r) % n == 0) {
    switch ((4 * r) / n) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
    }
  }
  const double a = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(n);
  return {std::cos(a), std::sin(a)};
}
} // namespace detail

/// K x N DCT-II matrix, entry [k,n] = cos(pi/N * (n + 1/2) * k). Unnormalized.
[[nodiscard]] inline RealMatrix build_dct2(std::size_t k_rows, std::size_t n) {
  detail::require_dims("build_dct2", k_rows, n);
  RealMatrix w(k_rows, n);
  const double step = std::numbers::pi / static_cast<double>(n);
  for (std::size_t k = 0; k < k_rows; ++k)
    for (std::size_t i = 0; i < n; ++i)
      w(k, i) = std::cos(step * (static_cast<double>(i) + 0.5) * static_cast<double>(k));
  return w;
}

/// N x K inverse of build_dct2(N, N): a DCT-III with first column 1/N and
/// remaining columns scaled by 2/N.
[[nodiscard]] inline RealMatrix build_dct3_inverse(std::size_t n, std::size_t k_cols) {
  detail::require_dims("build_dct3_inverse", n, k_cols);
  RealMatrix w(n, k_cols);
  const double nn = static_cast<double>(n);
  const double step = std::numbers::pi / nn;
  for (std::size_t i = 0; i < n; ++i) {
    w(i, 0) = 1.0 / nn;
    for (std::size_t k = 1; k < k_cols; ++k)
      w(i, k) = (2.0 / nn) * std::cos(step * static_cast<double>(k) * (static_cast<double>(i) + 0.5));
  }
  return w;
}

/// K x N DFT matrix e^{-2 pi j k n / N}, split into real and imaginary parts.
[[nodiscard]] inline ComplexPair build_dft(std::size_t k_rows, std::size_t n) {
  detail::require_dims("build_dft", k_rows, n);
  RealMatrix re(k_rows, n);
  RealMatrix im(k_rows, n);
  for (std::size_t k = 0; k < k_rows; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      // Reduce k*n mod N first so large indices keep full angle precision.
      const auto [c, s] = detail::unit_root((k * i) % n, n);
      re(k, i) = c;
      im(k, i) = s == 0.0 ? 0.0 : -s;
    }
  return {std::move(re), std::move(im)};
}

/// N x K inverse DFT matrix: conjugate transpose of build_dft scaled by 1/N.
[[nodiscard]] inline ComplexPair build_idft(std::size_t n, std::size_t k_cols) {
  detail::require_dims("build_idft", n, k_cols);
  RealMatrix re(n, k_cols);
  RealMatrix im(n, k_cols);
  const double nn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < k_cols; ++k) {
      const auto [c, s] = detail::unit_root((k * i) % n, n);
      re(i, k) = c / nn;
      im(i, k) = s / nn;
    }
  return {std::move(re), std::move(im)};
}

/// Two-sided real-to-complex DFT X = W_K x W_L^T evaluated in real arithmetic.
[[nodiscard]] inline ComplexPair dft2d_forward_real(const RealMatrix &x, const ComplexPair &wk,
                                                    const ComplexPair &wl) {
  if (wk.cols() != x.rows() || wl.cols() != x.cols())
    throw std::invalid_argument("dft2d_forward_real: shape mismatch (x " + std::to_string(x.rows()) +
                                "x" + std::to_string(x.cols()) + ", wk " +
                                std::to_string(wk.rows()) + "x" + std::to_string(wk.cols()) +
                                ", wl " + std::to_string(wl.rows()) + "x" +
                                std::to_string(wl.cols()) + ")");
  const RealMatrix pr = matmul(wk.re, x);
  const RealMatrix pi = matmul(wk.im, x);
  RealMatrix xr = matmul(pr, wl.re, false, true) - matmul(pi, wl.im, false, true);
  RealMatrix xi = matmul(pi, wl.re, false, true) + matmul(pr, wl.im, false, true);
  return {std::move(xr), std::move(xi)};
}

/// Complex-to-complex two-sided product A X B^T.
[[nodiscard]] inline ComplexPair two_sided_complex(const ComplexPair &a, const ComplexPair &x,
                                                   const ComplexPair &b) {
  if (a.cols() != x.rows() || b.cols() != x.cols())
    throw std::invalid_argument("two_sided_complex: shape mismatch");
  const ComplexPair bt{transpose(b.re), transpose(b.im)};
  return complex_matmul(complex_matmul(a, x), bt);
}

/// X = wk x wl^T for real matrices (DCT or any real two-sided map).
[[nodiscard]] inline RealMatrix dct2d_forward(const RealMatrix &x, const RealMatrix &wk,
                                              const RealMatrix &wl) {
  if (wk.cols() != x.rows() || wl.cols() != x.cols())
    throw std::invalid_argument("dct2d_forward: shape mismatch");
  return matmul(matmul(wk, x), wl, false, true);
}

/// Concat stacks [re; im] vertically; Amplitude is the entrywise modulus.
[[nodiscard]] inline RealMatrix complex_output(const ComplexPair &pair, ComplexOutput mode) {
  const std::size_t k = pair.rows();
  const std::size_t l = pair.cols();
  if (mode == ComplexOutput::Concat) {
    RealMatrix out(2 * k, l);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < l; ++j) {
        out(i, j) = pair.re(i, j);
        out(k + i, j) = pair.im(i, j);
      }
    return out;
  }
  RealMatrix out(k, l);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < l; ++j)
      out(i, j) = std::hypot(pair.re(i, j), pair.im(i, j));
  return out;
}

/// Conjugate symmetry X[k,l] == conj(X[-k mod N, -l mod M]) of a real input's DFT.
[[nodiscard]] inline bool check_real_dft_symmetry(const ComplexPair &x, double tol) {
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < m; ++l) {
      const std::size_t km = (n - k) % n;
      const std::size_t lm = (m - l) % m;
      if (std::abs(x.re(k, l) - x.re(km, lm)) > tol)
        return false;
      if (std::abs(x.im(k, l) + x.im(km, lm)) > tol)
        return false;
    }
  return true;
}

/// Rebuild a full N x M real-input DFT from its first floor(N/2)+1 rows by
/// conjugate mirroring.
[[nodiscard]] inline ComplexPair reconstruct_from_half(const ComplexPair &half, std::size_t n) {
  const std::size_t m = half.cols();
  if (half.rows() != n / 2 + 1)
    throw std::invalid_argument("reconstruct_from_half: expected " + std::to_string(n / 2 + 1) +
                                " rows");
  RealMatrix re(n, m);
  RealMatrix im(n, m);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < m; ++l) {
      if (k < half.rows()) {
        re(k, l) = half.re(k, l);
        im(k, l) = half.im(k, l);
      } else {
        const std::size_t km = n - k;
        const std::size_t lm = (m - l) % m;
        re(k, l) = half.re(km, lm);
        im(k, l) = -half.im(km, lm);
      }
    }
  return {std::move(re), std::move(im)};
}

// ---------------------------------------------------------------------------
// Kronecker and flattening identities. These are verification tools, the
// layers never materialize them.

/// A (m x n) kron B (k x l) -> (mk x nl) with block [i,j] = a_ij * B.
[[nodiscard]] inline RealMatrix kron(const RealMatrix &a, const RealMatrix &b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("kron: empty operand");
  RealMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double s = a(i, j);
      for (std::size_t p = 0; p < b.rows(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q)
          out(i * b.rows() + p, j * b.cols() + q) = s * b(p, q);
    }
  return out;
}

/// Column-major stacking into a (rows*cols) x 1 column.
[[nodiscard]] inline RealMatrix vec(const RealMatrix &x) {
  if (x.empty())
    throw std::invalid_argument("vec: empty matrix");
  RealMatrix v(x.rows() * x.cols(), 1);
  for (std::size_t j = 0; j < x.cols(); ++j)
    for (std::size_t i = 0; i < x.rows(); ++i)
      v(j * x.rows() + i, 0) = x(i, j);
  return v;
}

/// Row-first flattening into a (rows*cols) x 1 column.
[[nodiscard]] inline RealMatrix rowvec(const RealMatrix &x) {
  if (x.empty())
    throw std::invalid_argument("rowvec: empty matrix");
  return RealMatrix(x.rows() * x.cols(), 1, std::vector<double>(x.data().begin(), x.data().end()));
}

/// Block matrix with blocks I_N * w_ij, so that result * rowvec(X) == rowvec(W X).
[[nodiscard]] inline RealMatrix flatten_left_weight(const RealMatrix &w) {
  if (w.rows() != w.cols())
    throw std::invalid_argument("flatten_left_weight: square matrix required, got " +
                                std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
  const std::size_t n = w.rows();
  RealMatrix out(n * n, n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t d = 0; d < n; ++d)
        out(i * n + d, j * n + d) = w(i, j);
  return out;
}

} // namespace spectral
