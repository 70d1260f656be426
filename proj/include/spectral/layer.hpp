#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "spectral/errors.hpp"
#include "spectral/linalg.hpp"
#include "spectral/matrix.hpp"
#include "spectral/rng.hpp"
#include "spectral/tensor.hpp"

namespace spectral {

/// Forward/backward contract shared by every layer. forward() caches what
/// backward() needs; backward() returns the input gradient and adds parameter
/// gradients into Param::grad (they are zeroed by the optimizer).
class Layer {
public:
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor &input) = 0;
  virtual Tensor backward(const Tensor &grad_out) = 0;
  virtual std::vector<Param *> params() { return {}; }

  /// Stable identifier, e.g. "conv" or "transform:dct2".
  [[nodiscard]] virtual std::string kind() const = 0;

  /// Per-sample output shape (C, H, W) for a per-sample input shape.
  [[nodiscard]] virtual Tensor::Shape output_shape(const Tensor::Shape &input_chw) const = 0;

  /// Number of non-frozen f64 entries held as parameters.
  [[nodiscard]] std::size_t trainable_count() {
    std::size_t n = 0;
    for (const Param *p : params())
      if (!p->frozen)
        n += p->value.size();
    return n;
  }

protected:
  void check_grad_shape(const Tensor &grad_out) const {
    if (grad_out.shape() != last_output_shape_)
      throw ContractViolation(kind() + ": backward gradient shape " +
                              Tensor::shape_string(grad_out.shape()) +
                              " differs from last forward output " +
                              Tensor::shape_string(last_output_shape_));
  }

  Tensor::Shape last_output_shape_;
};

// ---------------------------------------------------------------------------
// Two-sided matrix transform primitive y = W1 x W2^T.

[[nodiscard]] inline RealMatrix matmul_transform_forward(const RealMatrix &x, const RealMatrix &w1,
                                                         const RealMatrix &w2) {
  if (w1.cols() != x.rows() || w2.cols() != x.cols())
    throw std::invalid_argument("matmul_transform_forward: shape mismatch (x " +
                                std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                                ", W1 " + std::to_string(w1.rows()) + "x" +
                                std::to_string(w1.cols()) + ", W2 " + std::to_string(w2.rows()) +
                                "x" + std::to_string(w2.cols()) + ")");
  const RealMatrix x1 = matmul(w1, x);
  return matmul(x1, w2, false, true);
}

struct TransformGrads {
  RealMatrix x;
  RealMatrix w1;
  RealMatrix w2;
};

/// Gradients of sum(grad_out .* (W1 x W2^T)) with respect to x, W1 and W2.
[[nodiscard]] inline TransformGrads matmul_transform_backward(const RealMatrix &grad_out,
                                                              const RealMatrix &x,
                                                              const RealMatrix &w1,
                                                              const RealMatrix &w2) {
  if (w1.cols() != x.rows() || w2.cols() != x.cols() || grad_out.rows() != w1.rows() ||
      grad_out.cols() != w2.rows())
    throw std::invalid_argument("matmul_transform_backward: shape mismatch");
  const RealMatrix g_w2 = matmul(grad_out, w2); // K x M
  return {matmul(w1, g_w2, true, false),        // W1^T G W2
          matmul(g_w2, x, false, true),         // G W2 x^T
          matmul(matmul(grad_out, w1, true, false), x)}; // G^T W1 x
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check.

namespace detail {
inline Tensor fd_loss_weights(const Tensor::Shape &shape) {
  Tensor r(shape);
  CounterRng rng(0x5eed'f00dULL);
  for (double &v : r.data())
    v = rng.uniform(-1.0, 1.0);
  return r;
}

// sum(R .* (plus - minus)); differencing entrywise first avoids cancelling two
// large loss totals against each other.
inline double weighted_difference(const Tensor &plus, const Tensor &minus, const Tensor &r) {
  double s = 0.0;
  for (std::size_t i = 0; i < plus.size(); ++i)
    s += (plus[i] - minus[i]) * r[i];
  return s;
}

inline double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}
} // namespace detail

/// Central finite differences of the fixed scalar loss sum(R .* layer(x)),
/// R a fixed pseudo-random tensor, against the layer's analytic gradients
/// for every input and parameter entry. Returns the worst relative error.
inline double finite_difference_check(Layer &layer, Tensor input, double epsilon) {
  if (!(epsilon > 0.0))
    throw std::invalid_argument("finite_difference_check: epsilon must be positive");
  const Tensor out = layer.forward(input);
  const Tensor again = layer.forward(input);
  if (out != again)
    throw ContractViolation(layer.kind() + ": forward is not deterministic");

  const Tensor r = detail::fd_loss_weights(out.shape());
  auto params = layer.params();
  for (Param *p : params)
    p->zero_grad();
  const Tensor grad_in = layer.backward(r);


  double worst = 0.0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double orig = input[i];
    input[i] = orig + epsilon;
    const Tensor yp = layer.forward(input);
    input[i] = orig - epsilon;
    const Tensor ym = layer.forward(input);
    input[i] = orig;
    const double numeric = detail::weighted_difference(yp, ym, r) / (2.0 * epsilon);
    worst = std::max(worst, detail::rel_error(grad_in[i], numeric));
  }
  for (Param *p : params) {
    const Tensor analytic = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + epsilon;
      const Tensor yp = layer.forward(input);
      p->value[i] = orig - epsilon;
      const Tensor ym = layer.forward(input);
      p->value[i] = orig;
      const double numeric = detail::weighted_difference(yp, ym, r) / (2.0 * epsilon);
      worst = std::max(worst, detail::rel_error(analytic[i], numeric));
    }
  }
  // Leave the layer with state cached for the unperturbed input.
  layer.forward(input);
  return worst;
}

} // namespace spectral
