#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spectral/linalg.hpp"

namespace spectral {

/// Dense row-major f64 matrix. A default-constructed matrix is the empty 0x0 value;
/// every other matrix has positive dimensions.
class RealMatrix {
public:
  RealMatrix() = default;

  RealMatrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0)
      throw std::invalid_argument("RealMatrix: dimensions must be positive, got " +
                                  std::to_string(rows) + "x" + std::to_string(cols));
    data_.assign(rows * cols, fill);
  }

  RealMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0)
      throw std::invalid_argument("RealMatrix: dimensions must be positive");
    if (data_.size() != rows * cols)
      throw std::invalid_argument("RealMatrix: data length " + std::to_string(data_.size()) +
                                  " does not match " + std::to_string(rows) + "x" +
                                  std::to_string(cols));
  }

  RealMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    if (rows_ == 0 || cols_ == 0)
      throw std::invalid_argument("RealMatrix: dimensions must be positive");
    data_.reserve(rows_ * cols_);
    for (const auto &r : rows) {
      if (r.size() != cols_)
        throw std::invalid_argument("RealMatrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static RealMatrix identity(std::size_t n) {
    RealMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      m(i, i) = 1.0;
    return m;
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  double &operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

  [[nodiscard]] bool same_shape(const RealMatrix &o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  [[nodiscard]] bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const RealMatrix &) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// One complex matrix held as separate real and imaginary parts.
struct ComplexPair {
  RealMatrix re;
  RealMatrix im;

  ComplexPair() = default;
  ComplexPair(RealMatrix r, RealMatrix i) : re(std::move(r)), im(std::move(i)) {
    if (!re.same_shape(im))
      throw std::invalid_argument("ComplexPair: real and imaginary parts differ in shape");
  }

  [[nodiscard]] std::size_t rows() const noexcept { return re.rows(); }
  [[nodiscard]] std::size_t cols() const noexcept { return re.cols(); }
};

// ---------------------------------------------------------------------------
// Basic algebra

[[nodiscard]] inline RealMatrix transpose(const RealMatrix &a) {
  RealMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      t(j, i) = a(i, j);
  return t;
}

/// op(a) * op(b), with optional transposition of either operand.
[[nodiscard]] inline RealMatrix matmul(const RealMatrix &a, const RealMatrix &b, bool trans_a = false,
                                       bool trans_b = false) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t ka = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (ka != kb)
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(ka) + " vs " +
                                std::to_string(kb) + ")");
  RealMatrix c(m, n);
  linalg::gemm(trans_a ? linalg::Op::T : linalg::Op::N, trans_b ? linalg::Op::T : linalg::Op::N, m,
               n, ka, 1.0, a.data().data(), a.cols(), b.data().data(), b.cols(), 0.0,
               c.data().data(), n);
  return c;
}

inline RealMatrix &operator+=(RealMatrix &a, const RealMatrix &b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("matrix add: shape mismatch");
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i)
    ad[i] += bd[i];
  return a;
}

inline RealMatrix &operator-=(RealMatrix &a, const RealMatrix &b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("matrix subtract: shape mismatch");
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i)
    ad[i] -= bd[i];
  return a;
}

[[nodiscard]] inline RealMatrix operator+(RealMatrix a, const RealMatrix &b) { return a += b; }
[[nodiscard]] inline RealMatrix operator-(RealMatrix a, const RealMatrix &b) { return a -= b; }

[[nodiscard]] inline RealMatrix operator*(double s, RealMatrix a) {
  for (double &v : a.data())
    v *= s;
  return a;
}

/// Largest absolute entrywise difference; shapes must agree.
[[nodiscard]] inline double max_abs_diff(const RealMatrix &a, const RealMatrix &b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i)
    m = std::max(m, std::abs(ad[i] - bd[i]));
  return m;
}

/// Complex product (a.re + j a.im)(b.re + j b.im).
[[nodiscard]] inline ComplexPair complex_matmul(const ComplexPair &a, const ComplexPair &b) {
  return {matmul(a.re, b.re) - matmul(a.im, b.im), matmul(a.re, b.im) + matmul(a.im, b.re)};
}

// ---------------------------------------------------------------------------
// CSV: one matrix row per line, values printed with round-trip precision.

inline std::string to_csv(const RealMatrix &m) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j)
        os << ',';
      os << m(i, j);
    }
    os << '\n';
  }
  return os.str();
}

inline void write_csv(const std::string &path, const RealMatrix &m) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open " + path + " for writing");
  out << to_csv(m);
  if (!out)
    throw std::runtime_error("write failed: " + path);
}

inline RealMatrix parse_csv(const std::string &text) {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::size_t count = 0;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      values.push_back(std::stod(cell));
      ++count;
    }
    if (rows == 0)
      cols = count;
    else if (count != cols)
      throw std::invalid_argument("parse_csv: ragged row " + std::to_string(rows));
    ++rows;
  }
  return RealMatrix(rows, cols, std::move(values));
}

inline RealMatrix read_csv(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

} // namespace spectral
