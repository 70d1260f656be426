#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spectral/matrix.hpp"

namespace spectral {

/// Dense row-major f64 tensor with up to four dimensions (N, C, H, W order).
class Tensor {
public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 4)
      throw std::invalid_argument("Tensor: rank must be 1..4");
    data_.assign(element_count(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty() || shape_.size() > 4)
      throw std::invalid_argument("Tensor: rank must be 1..4");
    if (data_.size() != element_count(shape_))
      throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_string(shape_));
  }

  static Tensor from_matrix(const RealMatrix &m) {
    return Tensor({m.rows(), m.cols()}, std::vector<double>(m.data().begin(), m.data().end()));
  }

  [[nodiscard]] RealMatrix to_matrix() const {
    if (shape_.size() != 2)
      throw std::invalid_argument("Tensor::to_matrix: rank-2 tensor required");
    return RealMatrix(shape_[0], shape_[1], data_);
  }

  [[nodiscard]] static std::size_t element_count(const Shape &s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  [[nodiscard]] static std::string shape_string(const Shape &s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i)
        out += 'x';
      out += std::to_string(s[i]);
    }
    return out;
  }

  [[nodiscard]] const Shape &shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return shape_.at(i); }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  double &operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  /// 4-D accessor.
  double &at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const double &at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Same data, new shape with an equal element count.
  [[nodiscard]] Tensor reshaped(Shape s) const {
    if (element_count(s) != data_.size())
      throw std::invalid_argument("Tensor::reshaped: element count mismatch");
    return Tensor(std::move(s), data_);
  }

  void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

  [[nodiscard]] bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const Tensor &) const = default;

private:
  Shape shape_;
  std::vector<double> data_;
};

[[nodiscard]] inline double max_abs_diff(const Tensor &a, const Tensor &b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("max_abs_diff: shape mismatch " + Tensor::shape_string(a.shape()) +
                                " vs " + Tensor::shape_string(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Trainable value with its accumulated gradient.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;

  Param() = default;
  Param(std::string n, Tensor v, bool freeze = false)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), frozen(freeze) {}

  void zero_grad() noexcept { grad.fill(0.0); }
};

/// NaN/Inf sentinel, active in debug builds only.
inline void debug_check_finite([[maybe_unused]] const Tensor &t, [[maybe_unused]] const char *where) {
#ifndef NDEBUG
  if (!t.all_finite())
    throw std::runtime_error(std::string("non-finite value produced in ") + where);
#endif
}

} // namespace spectral
