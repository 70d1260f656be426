#pragma once

// Brute-force reference evaluations. They deliberately avoid the transform
// matrices and evaluate the defining double sums with std::complex, so they
// stay independent of the code paths they are used to check.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>

#include "spectral/matrix.hpp"

namespace spectral::oracle {

/// O(N^2 M^2) DFT of a complex input given as (re, im), truncated to K x L bins.
[[nodiscard]] inline ComplexPair naive_dft2d(const RealMatrix &x_re, const RealMatrix &x_im,
                                             std::size_t k_bins, std::size_t l_bins) {
  const std::size_t n = x_re.rows();
  const std::size_t m = x_re.cols();
  RealMatrix re(k_bins, l_bins);
  RealMatrix im(k_bins, l_bins);
  for (std::size_t k = 0; k < k_bins; ++k)
    for (std::size_t l = 0; l < l_bins; ++l) {
      std::complex<double> acc{0.0, 0.0};
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < m; ++b) {
          const double phase = -2.0 * std::numbers::pi *
                               (static_cast<double>(k * a) / static_cast<double>(n) +
                                static_cast<double>(l * b) / static_cast<double>(m));
          acc += std::complex<double>(x_re(a, b), x_im.empty() ? 0.0 : x_im(a, b)) *
                 std::polar(1.0, phase);
        }
      re(k, l) = acc.real();
      im(k, l) = acc.imag();
    }
  return {std::move(re), std::move(im)};
}

[[nodiscard]] inline ComplexPair naive_dft2d(const RealMatrix &x) {
  return naive_dft2d(x, RealMatrix{}, x.rows(), x.cols());
}

/// Unnormalized 2-D DCT-II by direct double sum.
[[nodiscard]] inline RealMatrix naive_dct2d(const RealMatrix &x, std::size_t k_bins,
                                            std::size_t l_bins) {
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  RealMatrix out(k_bins, l_bins);
  for (std::size_t k = 0; k < k_bins; ++k)
    for (std::size_t l = 0; l < l_bins; ++l) {
      double acc = 0.0;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < m; ++b)
          acc += x(a, b) *
                 std::cos(std::numbers::pi * (2.0 * static_cast<double>(a) + 1.0) *
                          static_cast<double>(k) / (2.0 * static_cast<double>(n))) *
                 std::cos(std::numbers::pi * (2.0 * static_cast<double>(b) + 1.0) *
                          static_cast<double>(l) / (2.0 * static_cast<double>(m)));
      out(k, l) = acc;
    }
  return out;
}

/// Naive triple-loop real matrix product, no shared kernel.
[[nodiscard]] inline RealMatrix naive_matmul(const RealMatrix &a, const RealMatrix &b) {
  RealMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p)
        s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

/// Naive complex product of split matrices using std::complex entries.
[[nodiscard]] inline ComplexPair naive_complex_matmul(const ComplexPair &a, const ComplexPair &b) {
  RealMatrix re(a.rows(), b.cols());
  RealMatrix im(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      std::complex<double> s{0.0, 0.0};
      for (std::size_t p = 0; p < a.cols(); ++p)
        s += std::complex<double>(a.re(i, p), a.im(i, p)) *
             std::complex<double>(b.re(p, j), b.im(p, j));
      re(i, j) = s.real();
      im(i, j) = s.imag();
    }
  return {std::move(re), std::move(im)};
}

/// Conjugate transpose of a split complex matrix.
[[nodiscard]] inline ComplexPair conj_transpose(const ComplexPair &a) {
  RealMatrix re(a.cols(), a.rows());
  RealMatrix im(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      re(j, i) = a.re(i, j);
      im(j, i) = -a.im(i, j);
    }
  return {std::move(re), std::move(im)};
}

} // namespace spectral::oracle
