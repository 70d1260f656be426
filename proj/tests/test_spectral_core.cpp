#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "spectral/oracles.hpp"
#include "spectral/transforms.hpp"
#include "test_helpers.hpp"

using namespace spectral;
using spectral::test::random_matrix;

namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;

double max_abs(const RealMatrix &m) {
  double v = 0.0;
  for (double x : m.data())
    v = std::max(v, std::abs(x));
  return v;
}

} // namespace

TEST(BuildDct2, SingleRowIsOnes) {
  const RealMatrix w = build_dct2(1, 3);
  EXPECT_EQ(w, (RealMatrix{{1.0, 1.0, 1.0}}));
}

TEST(BuildDct2, TwoByTwoEntries) {
  const RealMatrix w = build_dct2(2, 2);
  EXPECT_DOUBLE_EQ(w(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(w(0, 1), 1.0);
  EXPECT_NEAR(w(1, 0), kInvSqrt2, 1e-15);
  EXPECT_NEAR(w(1, 1), -kInvSqrt2, 1e-15);
}

TEST(BuildDct2, RowsAreOrthogonal) {
  const RealMatrix w = build_dct2(8, 8);
  const RealMatrix g = (2.0 / 8.0) * matmul(w, w, false, true);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      if (i != j) {
        EXPECT_NEAR(g(i, j), 0.0, 1e-13) << i << "," << j;
      }
    }
  // Row 0 has squared norm N, the others N/2.
  EXPECT_NEAR(g(0, 0), 2.0, 1e-13);
  for (std::size_t i = 1; i < 8; ++i)
    EXPECT_NEAR(g(i, i), 1.0, 1e-13);
}

TEST(BuildDct2, ZeroDimensionThrows) {
  EXPECT_THROW((void)build_dct2(0, 4), std::invalid_argument);
  EXPECT_THROW((void)build_dct2(4, 0), std::invalid_argument);
}

TEST(BuildDct3Inverse, OneByOne) { EXPECT_EQ(build_dct3_inverse(1, 1), (RealMatrix{{1.0}})); }

TEST(BuildDct3Inverse, TwoByTwoEntries) {
  const RealMatrix w = build_dct3_inverse(2, 2);
  EXPECT_DOUBLE_EQ(w(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(w(1, 0), 0.5);
  EXPECT_NEAR(w(0, 1), kInvSqrt2, 1e-15);
  EXPECT_NEAR(w(1, 1), -kInvSqrt2, 1e-15);
}

TEST(BuildDct3Inverse, InvertsDct2UpTo64) {
  for (std::size_t n = 1; n <= 64; ++n) {
    const RealMatrix p = matmul(build_dct3_inverse(n, n), build_dct2(n, n));
    EXPECT_LT(max_abs_diff(p, RealMatrix::identity(n)), 1e-10) << "N=" << n;
  }
  EXPECT_LT(max_abs_diff(matmul(build_dct3_inverse(4, 4), build_dct2(4, 4)), RealMatrix::identity(4)),
            1e-12);
}

TEST(BuildDct3Inverse, ZeroDimensionThrows) {
  EXPECT_THROW((void)build_dct3_inverse(0, 1), std::invalid_argument);
}

TEST(BuildDft, OneByOne) {
  const ComplexPair w = build_dft(1, 1);
  EXPECT_EQ(w.re, (RealMatrix{{1.0}}));
  EXPECT_EQ(w.im, (RealMatrix{{0.0}}));
}

TEST(BuildDft, TwoByTwo) {
  const ComplexPair w = build_dft(2, 2);
  EXPECT_LT(max_abs_diff(w.re, RealMatrix{{1.0, 1.0}, {1.0, -1.0}}), 1e-15);
  EXPECT_LT(max_abs(w.im), 1e-15);
}

TEST(BuildDft, ConjugateTransposeProductIsNTimesIdentity) {
  const ComplexPair w = build_dft(4, 4);
  const ComplexPair p = oracle::naive_complex_matmul(oracle::conj_transpose(w), w);
  EXPECT_LT(max_abs_diff(p.re, 4.0 * RealMatrix::identity(4)), 1e-12);
  EXPECT_LT(max_abs(p.im), 1e-12);
}

TEST(BuildDft, ZeroDimensionThrows) { EXPECT_THROW((void)build_dft(3, 0), std::invalid_argument); }

TEST(BuildIdft, OneByOne) {
  const ComplexPair w = build_idft(1, 1);
  EXPECT_EQ(w.re, (RealMatrix{{1.0}}));
  EXPECT_EQ(w.im, (RealMatrix{{0.0}}));
}

TEST(BuildIdft, TwoByTwo) {
  const ComplexPair w = build_idft(2, 2);
  EXPECT_LT(max_abs_diff(w.re, RealMatrix{{0.5, 0.5}, {0.5, -0.5}}), 1e-15);
  EXPECT_LT(max_abs(w.im), 1e-15);
}

TEST(BuildIdft, InvertsDftUpTo64) {
  for (std::size_t n = 1; n <= 64; ++n) {
    const ComplexPair p = oracle::naive_complex_matmul(build_idft(n, n), build_dft(n, n));
    EXPECT_LT(max_abs_diff(p.re, RealMatrix::identity(n)), 1e-10) << "N=" << n;
    EXPECT_LT(max_abs(p.im), 1e-10) << "N=" << n;
  }
}

TEST(BuildIdft, ZeroDimensionThrows) { EXPECT_THROW((void)build_idft(0, 0), std::invalid_argument); }

TEST(Dft2dForwardReal, ZerosMapToZeros) {
  const auto X = dft2d_forward_real(RealMatrix(3, 5), build_dft(3, 3), build_dft(5, 5));
  EXPECT_EQ(max_abs(X.re), 0.0);
  EXPECT_EQ(max_abs(X.im), 0.0);
}

TEST(Dft2dForwardReal, DeltaGivesFlatSpectrum) {
  RealMatrix x(2, 2);
  x(0, 0) = 1.0;
  const auto X = dft2d_forward_real(x, build_dft(2, 2), build_dft(2, 2));
  const auto ref = oracle::naive_dft2d(x);
  EXPECT_LT(max_abs_diff(X.re, RealMatrix(2, 2, 1.0)), 1e-15);
  EXPECT_LT(max_abs(X.im), 1e-15);
  EXPECT_LT(max_abs_diff(X.re, ref.re), 1e-15);
}

TEST(Dft2dForwardReal, ConstantConcentratesInDc) {
  const RealMatrix x(2, 2, 1.0);
  const auto X = dft2d_forward_real(x, build_dft(2, 2), build_dft(2, 2));
  RealMatrix expect(2, 2);
  expect(0, 0) = 4.0;
  EXPECT_LT(max_abs_diff(X.re, expect), 1e-14);
  EXPECT_LT(max_abs(X.im), 1e-14);
}

TEST(Dft2dForwardReal, MatchesBruteForceOnRandomInputs) {
  CounterRng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(16), m = 1 + rng.below(16);
    const RealMatrix x = random_matrix(n, m, rng);
    const auto X = dft2d_forward_real(x, build_dft(n, n), build_dft(m, m));
    const auto ref = oracle::naive_dft2d(x);
    ASSERT_LT(max_abs_diff(X.re, ref.re), 1e-9) << n << "x" << m;
    ASSERT_LT(max_abs_diff(X.im, ref.im), 1e-9) << n << "x" << m;
  }
}

TEST(Dft2dForwardReal, TruncatedBinsMatchOracle) {
  CounterRng rng(3);
  const RealMatrix x = random_matrix(6, 5, rng);
  const auto X = dft2d_forward_real(x, build_dft(3, 6), build_dft(2, 5));
  const auto ref = oracle::naive_dft2d(x, RealMatrix{}, 3, 2);
  EXPECT_LT(max_abs_diff(X.re, ref.re), 1e-12);
  EXPECT_LT(max_abs_diff(X.im, ref.im), 1e-12);
}

TEST(Dft2dForwardReal, ShapeMismatchThrows) {
  EXPECT_THROW((void)dft2d_forward_real(RealMatrix(3, 3), build_dft(3, 4), build_dft(3, 3)),
               std::invalid_argument);
}

TEST(Dct2dForward, IdentityMatricesLeaveInputUnchanged) {
  CounterRng rng(5);
  const RealMatrix x = random_matrix(4, 3, rng);
  EXPECT_EQ(dct2d_forward(x, RealMatrix::identity(4), RealMatrix::identity(3)), x);
}

TEST(Dct2dForward, ConstantConcentratesInDc) {
  const double c = 1.75;
  const RealMatrix X = dct2d_forward(RealMatrix(2, 2, c), build_dct2(2, 2), build_dct2(2, 2));
  RealMatrix expect(2, 2);
  expect(0, 0) = 4.0 * c;
  EXPECT_LT(max_abs_diff(X, expect), 1e-14);
  EXPECT_LT(max_abs_diff(X, oracle::naive_dct2d(RealMatrix(2, 2, c), 2, 2)), 1e-14);
}

TEST(Dct2dForward, RoundTripThroughInverse) {
  CounterRng rng(8);
  const RealMatrix x = random_matrix(8, 8, rng);
  const RealMatrix X = dct2d_forward(x, build_dct2(8, 8), build_dct2(8, 8));
  const RealMatrix back = dct2d_forward(X, build_dct3_inverse(8, 8), build_dct3_inverse(8, 8));
  EXPECT_LT(max_abs_diff(back, x), 1e-9);
}

TEST(Dct2dForward, MatchesBruteForceOnRandomInputs) {
  CounterRng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(16), m = 1 + rng.below(16);
    const RealMatrix x = random_matrix(n, m, rng);
    const RealMatrix X = dct2d_forward(x, build_dct2(n, n), build_dct2(m, m));
    ASSERT_LT(max_abs_diff(X, oracle::naive_dct2d(x, n, m)), 1e-9) << n << "x" << m;
  }
}

TEST(Dct2dForward, ShapeMismatchThrows) {
  EXPECT_THROW((void)dct2d_forward(RealMatrix(2, 3), build_dct2(2, 2), build_dct2(2, 2)),
               std::invalid_argument);
}

TEST(ComplexOutput, AmplitudeOfThreeFour) {
  const ComplexPair p{RealMatrix{{3.0}}, RealMatrix{{4.0}}};
  EXPECT_DOUBLE_EQ(complex_output(p, ComplexOutput::Amplitude)(0, 0), 5.0);
}

TEST(ComplexOutput, ZerosStayZero) {
  const ComplexPair p{RealMatrix(2, 3), RealMatrix(2, 3)};
  EXPECT_EQ(complex_output(p, ComplexOutput::Amplitude), RealMatrix(2, 3));
  EXPECT_EQ(complex_output(p, ComplexOutput::Concat), RealMatrix(4, 3));
}

TEST(ComplexOutput, ConcatStacksRealOverImaginary) {
  CounterRng rng(9);
  const ComplexPair p{random_matrix(4, 4, rng), random_matrix(4, 4, rng)};
  const RealMatrix out = complex_output(p, ComplexOutput::Concat);
  ASSERT_EQ(out.rows(), 8u);
  ASSERT_EQ(out.cols(), 4u);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(out(i, j), p.re(i, j));
      EXPECT_EQ(out(4 + i, j), p.im(i, j));
    }
}

TEST(RealDftSymmetry, HoldsForRandomRealInputs) {
  CounterRng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const RealMatrix x = random_matrix(6, 6, rng);
    EXPECT_TRUE(check_real_dft_symmetry(dft2d_forward_real(x, build_dft(6, 6), build_dft(6, 6)), 1e-10));
  }
}

TEST(RealDftSymmetry, FailsForComplexInput) {
  CounterRng rng(22);
  const RealMatrix xr = random_matrix(6, 6, rng);
  const RealMatrix xi = random_matrix(6, 6, rng);
  EXPECT_FALSE(check_real_dft_symmetry(oracle::naive_dft2d(xr, xi, 6, 6), 1e-10));
}

TEST(RealDftSymmetry, ScalarIsSelfConjugate) {
  const RealMatrix x{{2.5}};
  EXPECT_TRUE(check_real_dft_symmetry(dft2d_forward_real(x, build_dft(1, 1), build_dft(1, 1)), 1e-12));
}

TEST(RealDftSymmetry, HalfSpectrumDeterminesTheRest) {
  CounterRng rng(23);
  for (std::size_t n : {2u, 4u, 6u, 8u}) {
    const std::size_t m = 2 + rng.below(7);
    const RealMatrix x = random_matrix(n, m, rng);
    const auto full = oracle::naive_dft2d(x);
    // Keep only the first n/2 + 1 frequency rows.
    const auto half = dft2d_forward_real(x, build_dft(n / 2 + 1, n), build_dft(m, m));
    const auto rebuilt = reconstruct_from_half(half, n);
    // Mirrored rows are copies (negations) of computed rows, so they agree
    // with the full transform as exactly as the computed rows do.
    for (std::size_t k = n / 2 + 1; k < n; ++k)
      for (std::size_t l = 0; l < m; ++l) {
        EXPECT_EQ(rebuilt.re(k, l), half.re(n - k, (m - l) % m));
        EXPECT_EQ(rebuilt.im(k, l), -half.im(n - k, (m - l) % m));
      }
    EXPECT_LT(max_abs_diff(rebuilt.re, full.re), 1e-9);
    EXPECT_LT(max_abs_diff(rebuilt.im, full.im), 1e-9);
  }
}

TEST(Kron, IdentityTimesIdentity) {
  EXPECT_EQ(kron(RealMatrix::identity(2), RealMatrix::identity(2)), RealMatrix::identity(4));
}

TEST(Kron, BlockLayout) {
  const RealMatrix a{{1, 2}, {3, 4}};
  const RealMatrix b{{0, 1}, {1, 0}};
  const RealMatrix expect{{0, 1, 0, 2}, {1, 0, 2, 0}, {0, 3, 0, 4}, {3, 0, 4, 0}};
  EXPECT_EQ(kron(a, b), expect);
}

TEST(Kron, RankIsMultiplicative) {
  CounterRng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    RealMatrix a = random_matrix(3, 3, rng);
    RealMatrix b = random_matrix(3, 3, rng);
    if (trial % 2) {
      // Rank-deficient A: third row = first + second.
      for (std::size_t j = 0; j < 3; ++j)
        a(2, j) = a(0, j) + a(1, j);
    }
    EXPECT_EQ(test::rank_of(kron(a, b)), test::rank_of(a) * test::rank_of(b));
  }
}

TEST(Vec, ColumnMajorStacking) {
  EXPECT_EQ(vec(RealMatrix{{1, 2}, {3, 4}}), (RealMatrix{{1}, {3}, {2}, {4}}));
  EXPECT_EQ(vec(RealMatrix{{7}}), (RealMatrix{{7}}));
}

TEST(Vec, KroneckerIdentity) {
  CounterRng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const RealMatrix a = random_matrix(3, 3, rng), x = random_matrix(3, 3, rng),
                     b = random_matrix(3, 3, rng);
    const RealMatrix lhs = oracle::naive_matmul(kron(transpose(b), a), vec(x));
    const RealMatrix rhs = vec(oracle::naive_matmul(oracle::naive_matmul(a, x), b));
    EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
  }
}

TEST(FlattenLeftWeight, IdentityStaysIdentity) {
  EXPECT_EQ(flatten_left_weight(RealMatrix::identity(2)), RealMatrix::identity(4));
}

TEST(FlattenLeftWeight, ActsAsLeftMultiplication) {
  CounterRng rng(51);
  const RealMatrix w = random_matrix(3, 3, rng), x = random_matrix(3, 3, rng);
  const RealMatrix lhs = oracle::naive_matmul(flatten_left_weight(w), rowvec(x));
  EXPECT_LT(max_abs_diff(lhs, rowvec(oracle::naive_matmul(w, x))), 1e-12);
}

TEST(FlattenLeftWeight, DensityIsOneOverN) {
  CounterRng rng(52);
  const RealMatrix w = random_matrix(4, 4, rng, 0.5, 1.0);
  const RealMatrix f = flatten_left_weight(w);
  std::size_t nnz = 0;
  for (double v : f.data())
    nnz += v != 0.0;
  EXPECT_EQ(nnz, 64u);
  EXPECT_EQ(static_cast<double>(nnz) / static_cast<double>(f.size()), 1.0 / 4.0);
}

TEST(FlattenLeftWeight, NonSquareThrows) {
  EXPECT_THROW((void)flatten_left_weight(RealMatrix(2, 3)), std::invalid_argument);
}

TEST(RealMatrixInvariants, ConstructionRejectsBadShapes) {
  EXPECT_THROW(RealMatrix(0, 2), std::invalid_argument);
  EXPECT_THROW(RealMatrix(2, 2, std::vector<double>{1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW((ComplexPair{RealMatrix(2, 2), RealMatrix(2, 3)}), std::invalid_argument);
}

TEST(RealMatrixInvariants, ConstructorsProduceFiniteEntries) {
  for (std::size_t n : {1u, 7u, 33u}) {
    EXPECT_TRUE(build_dct2(n, n).all_finite());
    EXPECT_TRUE(build_dct3_inverse(n, n).all_finite());
    EXPECT_TRUE(build_dft(n, n).re.all_finite());
    EXPECT_TRUE(build_idft(n, n).im.all_finite());
  }
}

TEST(MatrixCsv, RoundTripIsExact) {
  CounterRng rng(61);
  const RealMatrix m = random_matrix(3, 4, rng, -1e3, 1e3);
  EXPECT_EQ(parse_csv(to_csv(m)), m);
}
