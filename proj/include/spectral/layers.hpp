#pragma once

// Concrete layers of the three-stage network: convolution, Leaky ReLU, the
// trainable two-sided matrix transform, global average pooling and the dense
// classifier. All of them follow the Layer contract in layer.hpp.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "spectral/layer.hpp"
#include "spectral/linalg.hpp"
#include "spectral/rng.hpp"
#include "spectral/tensor.hpp"
#include "spectral/transforms.hpp"

namespace spectral {

enum class InitKind { RND, DCT, DFT };

[[nodiscard]] constexpr std::string_view to_string(InitKind k) noexcept {
  switch (k) {
  case InitKind::RND: return "RND";
  case InitKind::DCT: return "DCT";
  case InitKind::DFT: return "DFT";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Initializers

/// Glorot-uniform draw on [-b, b], b = sqrt(6 / (fan_in + fan_out)).
[[nodiscard]] inline std::vector<double> glorot_uniform(std::size_t count, std::size_t fan_in,
                                                        std::size_t fan_out, std::uint64_t seed) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(count);
  CounterRng rng(seed);
  for (double &x : v)
    x = rng.uniform(-bound, bound);
  return v;
}

[[nodiscard]] inline RealMatrix init_random_normalized(std::size_t rows, std::size_t cols,
                                                       std::uint64_t seed) {
  if (rows == 0 || cols == 0)
    throw std::invalid_argument("init_random_normalized: dimensions must be positive");
  return RealMatrix(rows, cols, glorot_uniform(rows * cols, cols, rows, seed));
}

// ---------------------------------------------------------------------------
// Parameter counts

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = false;

  /// Output extent along one axis, or 0 when the kernel does not fit.
  [[nodiscard]] static std::size_t out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                              std::size_t padding) noexcept {
    if (stride == 0 || in + 2 * padding < kernel)
      return 0;
    return (in + 2 * padding - kernel) / stride + 1;
  }
};

[[nodiscard]] constexpr std::size_t count_conv_params(const ConvSpec &s) noexcept {
  return s.kernel_w * s.kernel_h * s.out_channels * s.in_channels + (s.bias ? s.out_channels : 0);
}

/// One matrix per spatial axis, K = FM_h and L = FM_w; complex kinds hold two.
[[nodiscard]] constexpr std::size_t count_transform_params(TransformKind kind, std::size_t height,
                                                           std::size_t width) noexcept {
  const std::size_t real = height * height + width * width;
  return is_complex(kind) ? 2 * real : real;
}

[[nodiscard]] constexpr std::size_t count_gap_params() noexcept { return 0; }

[[nodiscard]] constexpr std::size_t count_dense_params(std::size_t features, std::size_t classes,
                                                       bool bias) noexcept {
  return features * classes + (bias ? classes : 0);
}

// ---------------------------------------------------------------------------

namespace detail {
inline void require_rank4(const Tensor &t, const std::string &who) {
  if (t.rank() != 4)
    throw std::invalid_argument(who + ": expected a B x C x H x W tensor, got " +
                                Tensor::shape_string(t.shape()));
}
} // namespace detail

/// Cross-correlation with zero padding, lowered to GEMM via im2col.
class Conv2d final : public Layer {
public:
  Conv2d(ConvSpec spec, std::uint64_t seed) : spec_(spec) {
    if (spec.in_channels == 0 || spec.out_channels == 0 || spec.kernel_h == 0 ||
        spec.kernel_w == 0 || spec.stride == 0)
      throw std::invalid_argument("Conv2d: channel, kernel and stride counts must be positive");
    const std::size_t fan_in = spec.in_channels * spec.kernel_h * spec.kernel_w;
    const std::size_t fan_out = spec.out_channels * spec.kernel_h * spec.kernel_w;
    weight_ = Param("weight",
                    Tensor({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w},
                           glorot_uniform(fan_in * spec.out_channels, fan_in, fan_out, seed)));
    if (spec.bias)
      bias_ = Param("bias", Tensor({spec.out_channels}));
  }

  [[nodiscard]] const ConvSpec &spec() const noexcept { return spec_; }

  Tensor forward(const Tensor &input) override {
    detail::require_rank4(input, "conv");
    if (input.dim(1) != spec_.in_channels)
      throw std::invalid_argument("conv: expected " + std::to_string(spec_.in_channels) +
                                  " input channels, got " + std::to_string(input.dim(1)));
    const auto out_chw = output_shape({input.dim(1), input.dim(2), input.dim(3)});
    in_shape_ = input.shape();
    const std::size_t batch = input.dim(0);
    const std::size_t oh = out_chw[1];
    const std::size_t ow = out_chw[2];
    const std::size_t plane = oh * ow;
    const std::size_t patch = spec_.in_channels * spec_.kernel_h * spec_.kernel_w;
    // One GEMM over the whole batch: columns are (sample, output pixel).
    const std::size_t ld = batch * plane;
    cols_.assign(patch * ld, 0.0);
    for (std::size_t b = 0; b < batch; ++b)
      im2col(input, b, oh, ow, ld, cols_.data() + b * plane);
    std::vector<double> prod(spec_.out_channels * ld);
    linalg::gemm(linalg::Op::N, linalg::Op::N, spec_.out_channels, ld, patch, 1.0,
                 weight_.value.data().data(), patch, cols_.data(), ld, 0.0, prod.data(), ld);
    Tensor out({batch, spec_.out_channels, oh, ow});
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < spec_.out_channels; ++c) {
        const double *src = prod.data() + c * ld + b * plane;
        double *dst = out.data().data() + (b * spec_.out_channels + c) * plane;
        const double bias = spec_.bias ? bias_.value[c] : 0.0;
        for (std::size_t p = 0; p < plane; ++p)
          dst[p] = src[p] + bias;
      }
    last_output_shape_ = out.shape();
    debug_check_finite(out, "conv forward");
    return out;
  }

  Tensor backward(const Tensor &grad_out) override {
    check_grad_shape(grad_out);
    const std::size_t batch = in_shape_[0];
    const std::size_t oh = grad_out.dim(2);
    const std::size_t ow = grad_out.dim(3);
    const std::size_t plane = oh * ow;
    const std::size_t patch = spec_.in_channels * spec_.kernel_h * spec_.kernel_w;
    const std::size_t ld = batch * plane;
    std::vector<double> g(spec_.out_channels * ld);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < spec_.out_channels; ++c) {
        const double *src = grad_out.data().data() + (b * spec_.out_channels + c) * plane;
        std::copy(src, src + plane, g.data() + c * ld + b * plane);
      }
    linalg::gemm(linalg::Op::N, linalg::Op::T, spec_.out_channels, patch, ld, 1.0, g.data(), ld,
                 cols_.data(), ld, 1.0, weight_.grad.data().data(), patch);
    if (spec_.bias)
      for (std::size_t c = 0; c < spec_.out_channels; ++c)
        for (std::size_t p = 0; p < ld; ++p)
          bias_.grad[c] += g[c * ld + p];
    std::vector<double> gcols(patch * ld);
    linalg::gemm(linalg::Op::T, linalg::Op::N, patch, ld, spec_.out_channels, 1.0,
                 weight_.value.data().data(), patch, g.data(), ld, 0.0, gcols.data(), ld);
    Tensor grad_in(in_shape_);
    for (std::size_t b = 0; b < batch; ++b)
      col2im(gcols.data() + b * plane, b, oh, ow, ld, grad_in);
    debug_check_finite(grad_in, "conv backward");
    return grad_in;
  }

  std::vector<Param *> params() override {
    if (spec_.bias)
      return {&weight_, &bias_};
    return {&weight_};
  }

  [[nodiscard]] std::string kind() const override { return "conv"; }

  [[nodiscard]] Tensor::Shape output_shape(const Tensor::Shape &chw) const override {
    const std::size_t oh = ConvSpec::out_extent(chw.at(1), spec_.kernel_h, spec_.stride, spec_.padding);
    const std::size_t ow = ConvSpec::out_extent(chw.at(2), spec_.kernel_w, spec_.stride, spec_.padding);
    if (oh == 0 || ow == 0)
      throw std::invalid_argument("conv: " + std::to_string(spec_.kernel_h) + "x" +
                                  std::to_string(spec_.kernel_w) + " kernel does not fit a " +
                                  std::to_string(chw.at(1)) + "x" + std::to_string(chw.at(2)) +
                                  " map with padding " + std::to_string(spec_.padding));
    return {spec_.out_channels, oh, ow};
  }

private:
  // Rows of `cols` are (channel, ky, kx) with stride ld; sample b's output
  // pixels occupy oh * ow consecutive columns starting at `cols`.
  void im2col(const Tensor &in, std::size_t b, std::size_t oh, std::size_t ow, std::size_t ld,
              double *cols) const {
    const std::size_t h = in.dim(2);
    const std::size_t w = in.dim(3);
    std::size_t row = 0;
    for (std::size_t c = 0; c < spec_.in_channels; ++c)
      for (std::size_t ky = 0; ky < spec_.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < spec_.kernel_w; ++kx, ++row) {
          double *dst = cols + row * ld;
          for (std::size_t y = 0; y < oh; ++y) {
            const auto iy = static_cast<std::ptrdiff_t>(y * spec_.stride + ky) -
                            static_cast<std::ptrdiff_t>(spec_.padding);
            for (std::size_t x = 0; x < ow; ++x) {
              const auto ix = static_cast<std::ptrdiff_t>(x * spec_.stride + kx) -
                              static_cast<std::ptrdiff_t>(spec_.padding);
              const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                  ix < static_cast<std::ptrdiff_t>(w);
              dst[y * ow + x] = inside ? in.at(b, c, static_cast<std::size_t>(iy),
                                               static_cast<std::size_t>(ix))
                                       : 0.0;
            }
          }
        }
  }

  void col2im(const double *cols, std::size_t b, std::size_t oh, std::size_t ow, std::size_t ld,
              Tensor &out) const {
    const std::size_t h = out.dim(2);
    const std::size_t w = out.dim(3);
    std::size_t row = 0;
    for (std::size_t c = 0; c < spec_.in_channels; ++c)
      for (std::size_t ky = 0; ky < spec_.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < spec_.kernel_w; ++kx, ++row) {
          const double *src = cols + row * ld;
          for (std::size_t y = 0; y < oh; ++y) {
            const auto iy = static_cast<std::ptrdiff_t>(y * spec_.stride + ky) -
                            static_cast<std::ptrdiff_t>(spec_.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h))
              continue;
            for (std::size_t x = 0; x < ow; ++x) {
              const auto ix = static_cast<std::ptrdiff_t>(x * spec_.stride + kx) -
                              static_cast<std::ptrdiff_t>(spec_.padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                continue;
              out.at(b, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                  src[y * ow + x];
            }
          }
        }
  }

  ConvSpec spec_;
  Param weight_;
  Param bias_;
  Tensor::Shape in_shape_;
  std::vector<double> cols_;
};

class LeakyRelu final : public Layer {
public:
  explicit LeakyRelu(double slope = 0.01) : slope_(slope) {
    if (!(slope > 0.0 && slope < 1.0))
      throw std::invalid_argument("LeakyRelu: slope must lie in (0, 1)");
  }

  [[nodiscard]] double slope() const noexcept { return slope_; }

  Tensor forward(const Tensor &input) override {
    input_ = input;
    Tensor out = input;
    for (double &v : out.data())
      v = v > 0.0 ? v : slope_ * v;
    last_output_shape_ = out.shape();
    return out;
  }

  Tensor backward(const Tensor &grad_out) override {
    check_grad_shape(grad_out);
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(input_[i] > 0.0))
        g[i] *= slope_;
    return g;
  }

  [[nodiscard]] std::string kind() const override { return "leaky_relu"; }
  [[nodiscard]] Tensor::Shape output_shape(const Tensor::Shape &chw) const override { return chw; }

private:
  double slope_;
  Tensor input_;
};

/// Entrywise max(x, slope * x).
[[nodiscard]] inline Tensor leaky_relu(const Tensor &x, double slope) {
  return LeakyRelu(slope).forward(x);
}

// ---------------------------------------------------------------------------

struct TransformSpec {
  TransformKind kind = TransformKind::DctII;
  std::size_t height = 1; ///< FM_h, also the number of vertical frequencies K
  std::size_t width = 1;  ///< FM_w, also L
  ComplexOutput output = ComplexOutput::Concat; ///< DftForward only
  bool frozen = false;
  std::uint64_t seed = 0; ///< RandomNormalized only
};

/// Trainable two-sided transform Y = W1 X W2^T applied to every channel with
/// one W1/W2 pair shared by all channels.
///
/// DftForward produces (X_R, X_I); Concat lays them out as channel blocks
/// [0, C) and [C, 2C). DftInverse consumes that layout, C real/imaginary
/// pairs from 2C channels, and emits the real part of the inverse (C channels).
class MatrixTransformLayer final : public Layer {
public:
  explicit MatrixTransformLayer(TransformSpec spec) : spec_(spec) {
    if (spec.height == 0 || spec.width == 0)
      throw std::invalid_argument("MatrixTransformLayer: feature map size must be positive");
    const std::size_t h = spec.height;
    const std::size_t w = spec.width;
    auto make = [&](const char *name, const RealMatrix &m) {
      params_.emplace_back(name, Tensor::from_matrix(m), spec.frozen);
    };
    switch (spec.kind) {
    case TransformKind::DctII:
      make("W1", build_dct2(h, h));
      make("W2", build_dct2(w, w));
      break;
    case TransformKind::DctIIIInverse:
      make("W1", build_dct3_inverse(h, h));
      make("W2", build_dct3_inverse(w, w));
      break;
    case TransformKind::RandomNormalized:
      make("W1", init_random_normalized(h, h, derive_key(spec.seed, 1)));
      make("W2", init_random_normalized(w, w, derive_key(spec.seed, 2)));
      break;
    case TransformKind::DftForward: {
      const ComplexPair a = build_dft(h, h);
      const ComplexPair b = build_dft(w, w);
      make("W1.re", a.re);
      make("W1.im", a.im);
      make("W2.re", b.re);
      make("W2.im", b.im);
      break;
    }
    case TransformKind::DftInverse: {
      const ComplexPair a = build_idft(h, h);
      const ComplexPair b = build_idft(w, w);
      make("W1.re", a.re);
      make("W1.im", a.im);
      make("W2.re", b.re);
      make("W2.im", b.im);
      break;
    }
    }
  }

  [[nodiscard]] const TransformSpec &spec() const noexcept { return spec_; }

  Tensor forward(const Tensor &input) override {
    detail::require_rank4(input, kind());
    if (input.dim(2) != spec_.height || input.dim(3) != spec_.width)
      throw std::invalid_argument(kind() + ": layer built for " + std::to_string(spec_.height) +
                                  "x" + std::to_string(spec_.width) + " maps, got " +
                                  std::to_string(input.dim(2)) + "x" +
                                  std::to_string(input.dim(3)));
    const auto chw = output_shape({input.dim(1), input.dim(2), input.dim(3)});
    input_ = input;
    Tensor out({input.dim(0), chw[0], chw[1], chw[2]});
    switch (spec_.kind) {
    case TransformKind::DftForward: forward_dft(input, out); break;
    case TransformKind::DftInverse: forward_idft(input, out); break;
    default: forward_real(input, out); break;
    }
    last_output_shape_ = out.shape();
    debug_check_finite(out, "transform forward");
    return out;
  }

  Tensor backward(const Tensor &grad_out) override {
    check_grad_shape(grad_out);
    Tensor grad_in(input_.shape());
    switch (spec_.kind) {
    case TransformKind::DftForward: backward_dft(grad_out, grad_in); break;
    case TransformKind::DftInverse: backward_idft(grad_out, grad_in); break;
    default: backward_real(grad_out, grad_in); break;
    }
    debug_check_finite(grad_in, "transform backward");
    return grad_in;
  }

  std::vector<Param *> params() override {
    std::vector<Param *> out;
    for (Param &p : params_)
      out.push_back(&p);
    return out;
  }

  [[nodiscard]] std::string kind() const override {
    return "transform:" + std::string(to_string(spec_.kind));
  }

  [[nodiscard]] Tensor::Shape output_shape(const Tensor::Shape &chw) const override {
    std::size_t c = chw.at(0);
    if (chw.at(1) != spec_.height || chw.at(2) != spec_.width)
      throw std::invalid_argument(kind() + ": expects " + std::to_string(spec_.height) + "x" +
                                  std::to_string(spec_.width) + " maps, got " +
                                  std::to_string(chw.at(1)) + "x" + std::to_string(chw.at(2)));
    if (spec_.kind == TransformKind::DftForward && spec_.output == ComplexOutput::Concat)
      c *= 2;
    if (spec_.kind == TransformKind::DftInverse) {
      if (c % 2 != 0)
        throw std::invalid_argument(kind() + ": needs an even channel count (real/imaginary "
                                             "pairs), got " + std::to_string(c));
      c /= 2;
    }
    return {c, spec_.height, spec_.width};
  }

  /// Real part of the first matrix (W1 or W1.re).
  [[nodiscard]] RealMatrix w1() const { return params_.front().value.to_matrix(); }

private:
  using Op = linalg::Op;

  // c = op(a) * op(b) + beta * c for square-ish blocks.
  static void mm(Op oa, Op ob, std::size_t m, std::size_t n, std::size_t k, double alpha,
                 const double *a, std::size_t lda, const double *b, std::size_t ldb, double beta,
                 double *c) {
    linalg::gemm(oa, ob, m, n, k, alpha, a, lda, b, ldb, beta, c, n);
  }

  const double *val(std::size_t i) const { return params_[i].value.data().data(); }
  double *grad(std::size_t i) { return params_[i].grad.data().data(); }

  void forward_real(const Tensor &in, Tensor &out) {
    const std::size_t h = spec_.height, w = spec_.width, plane = h * w;
    const std::size_t slices = in.dim(0) * in.dim(1);
    left_.assign(slices * plane, 0.0);
    for (std::size_t s = 0; s < slices; ++s) {
      const double *x = in.data().data() + s * plane;
      double *t = left_.data() + s * plane;
      mm(Op::N, Op::N, h, w, h, 1.0, val(0), h, x, w, 0.0, t);
      mm(Op::N, Op::T, h, w, w, 1.0, t, w, val(1), w, 0.0, out.data().data() + s * plane);
    }
  }

  void backward_real(const Tensor &g_out, Tensor &g_in) {
    const std::size_t h = spec_.height, w = spec_.width, plane = h * w;
    const std::size_t slices = g_out.dim(0) * g_out.dim(1);
    std::vector<double> gw2(plane);
    for (std::size_t s = 0; s < slices; ++s) {
      const double *g = g_out.data().data() + s * plane;
      const double *x = input_.data().data() + s * plane;
      const double *t = left_.data() + s * plane;
      mm(Op::N, Op::N, h, w, w, 1.0, g, w, val(1), w, 0.0, gw2.data());
      mm(Op::T, Op::N, h, w, h, 1.0, val(0), h, gw2.data(), w, 0.0, g_in.data().data() + s * plane);
      mm(Op::N, Op::T, h, h, w, 1.0, gw2.data(), w, x, w, 1.0, grad(0));
      mm(Op::T, Op::N, w, w, h, 1.0, g, w, t, w, 1.0, grad(1));
    }
  }

  // params: 0 A.re, 1 A.im (h x h), 2 B.re, 3 B.im (w x w)
  void forward_dft(const Tensor &in, Tensor &out) {
    const std::size_t h = spec_.height, w = spec_.width, plane = h * w;
    const std::size_t batch = in.dim(0), ch = in.dim(1), slices = batch * ch;
    left_.assign(2 * slices * plane, 0.0);
    spec_out_.assign(2 * slices * plane, 0.0);
    const bool concat = spec_.output == ComplexOutput::Concat;
    for (std::size_t s = 0; s < slices; ++s) {
      const double *x = in.data().data() + s * plane;
      double *pr = left_.data() + (2 * s) * plane;
      double *pi = pr + plane;
      double *xr = spec_out_.data() + (2 * s) * plane;
      double *xi = xr + plane;
      mm(Op::N, Op::N, h, w, h, 1.0, val(0), h, x, w, 0.0, pr);
      mm(Op::N, Op::N, h, w, h, 1.0, val(1), h, x, w, 0.0, pi);
      mm(Op::N, Op::T, h, w, w, 1.0, pr, w, val(2), w, 0.0, xr);
      mm(Op::N, Op::T, h, w, w, -1.0, pi, w, val(3), w, 1.0, xr);
      mm(Op::N, Op::T, h, w, w, 1.0, pi, w, val(2), w, 0.0, xi);
      mm(Op::N, Op::T, h, w, w, 1.0, pr, w, val(3), w, 1.0, xi);
      const std::size_t b = s / ch, c = s % ch;
      if (concat) {
        double *o_re = &out.at(b, c, 0, 0);
        double *o_im = &out.at(b, ch + c, 0, 0);
        std::copy(xr, xr + plane, o_re);
        std::copy(xi, xi + plane, o_im);
      } else {
        double *o = &out.at(b, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i)
          o[i] = std::hypot(xr[i], xi[i]);
      }
    }
  }

  void backward_dft(const Tensor &g_out, Tensor &g_in) {
    const std::size_t h = spec_.height, w = spec_.width, plane = h * w;
    const std::size_t batch = input_.dim(0), ch = input_.dim(1), slices = batch * ch;
    const bool concat = spec_.output == ComplexOutput::Concat;
    std::vector<double> gr(plane), gi(plane), gpr(plane), gpi(plane);
    for (std::size_t s = 0; s < slices; ++s) {
      const std::size_t b = s / ch, c = s % ch;
      const double *x = input_.data().data() + s * plane;
      const double *pr = left_.data() + (2 * s) * plane;
      const double *pi = pr + plane;
      if (concat) {
        const double *src_re = &g_out.at(b, c, 0, 0);
        const double *src_im = &g_out.at(b, ch + c, 0, 0);
        std::copy(src_re, src_re + plane, gr.begin());
        std::copy(src_im, src_im + plane, gi.begin());
      } else {
        const double *g = &g_out.at(b, c, 0, 0);
        const double *xr = spec_out_.data() + (2 * s) * plane;
        const double *xi = xr + plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double amp = std::hypot(xr[i], xi[i]);
          gr[i] = amp > 0.0 ? g[i] * xr[i] / amp : 0.0;
          gi[i] = amp > 0.0 ? g[i] * xi[i] / amp : 0.0;
        }
      }
      // gP_r = G_R B_r + G_I B_i ; gP_i = -G_R B_i + G_I B_r
      mm(Op::N, Op::N, h, w, w, 1.0, gr.data(), w, val(2), w, 0.0, gpr.data());
      mm(Op::N, Op::N, h, w, w, 1.0, gi.data(), w, val(3), w, 1.0, gpr.data());
      mm(Op::N, Op::N, h, w, w, -1.0, gr.data(), w, val(3), w, 0.0, gpi.data());
      mm(Op::N, Op::N, h, w, w, 1.0, gi.data(), w, val(2), w, 1.0, gpi.data());
      // gB_r += G_R^T P_r + G_I^T P_i ; gB_i += -G_R^T P_i + G_I^T P_r
      mm(Op::T, Op::N, w, w, h, 1.0, gr.data(), w, pr, w, 1.0, grad(2));
      mm(Op::T, Op::N, w, w, h, 1.0, gi.data(), w, pi, w, 1.0, grad(2));
      mm(Op::T, Op::N, w, w, h, -1.0, gr.data(), w, pi, w, 1.0, grad(3));
      mm(Op::T, Op::N, w, w, h, 1.0, gi.data(), w, pr, w, 1.0, grad(3));
      // gA_r += gP_r x^T ; gA_i += gP_i x^T
      mm(Op::N, Op::T, h, h, w, 1.0, gpr.data(), w, x, w, 1.0, grad(0));
      mm(Op::N, Op::T, h, h, w, 1.0, gpi.data(), w, x, w, 1.0, grad(1));
      // gx = A_r^T gP_r + A_i^T gP_i
      double *gx = g_in.data().data() + s * plane;
      mm(Op::T, Op::N, h, w, h, 1.0, val(0), h, gpr.data(), w, 0.0, gx);
      mm(Op::T, Op::N, h, w, h, 1.0, val(1), h, gpi.data(), w, 1.0, gx);
    }
  }

  void forward_idft(const Tensor &in, Tensor &out) {
    const std::size_t h = spec_.height, w = spec_.width, plane = h * w;
    const std::size_t batch = in.dim(0), pairs = in.dim(1) / 2, slices = batch * pairs;
    left_.assign(2 * slices * plane, 0.0);
    for (std::size_t s = 0; s < slices; ++s) {
      const std::size_t b = s / pairs, c = s % pairs;
      const double *xr = &in.at(b, c, 0, 0);
      const double *xi = &in.at(b, pairs + c, 0, 0);
      double *yr = left_.data() + (2 * s) * plane;
      double *yi = yr + plane;
      // Y = A X
      mm(Op::N, Op::N, h, w, h, 1.0, val(0), h, xr, w, 0.0, yr);
      mm(Op::N, Op::N, h, w, h, -1.0, val(1), h, xi, w, 1.0, yr);
      mm(Op::N, Op::N, h, w, h, 1.0, val(0), h, xi, w, 0.0, yi);
      mm(Op::N, Op::N, h, w, h, 1.0, val(1), h, xr, w, 1.0, yi);
      // out = Re(Y B^T) = Y_r B_r^T - Y_i B_i^T
      double *o = &out.at(b, c, 0, 0);
      mm(Op::N, Op::T, h, w, w, 1.0, yr, w, val(2), w, 0.0, o);
      mm(Op::N, Op::T, h, w, w, -1.0, yi, w, val(3), w, 1.0, o);
    }
  }

  void backward_idft(const Tensor &g_out, Tensor &g_in) {
    const std::size_t h = spec_.height, w = spec_.width, plane = h * w;
    const std::size_t batch = input_.dim(0), pairs = input_.dim(1) / 2, slices = batch * pairs;
    std::vector<double> gyr(plane), gyi(plane);
    for (std::size_t s = 0; s < slices; ++s) {
      const std::size_t b = s / pairs, c = s % pairs;
      const double *g = &g_out.at(b, c, 0, 0);
      const double *xr = &input_.at(b, c, 0, 0);
      const double *xi = &input_.at(b, pairs + c, 0, 0);
      const double *yr = left_.data() + (2 * s) * plane;
      const double *yi = yr + plane;
      // gY_r = G B_r ; gY_i = -G B_i
      mm(Op::N, Op::N, h, w, w, 1.0, g, w, val(2), w, 0.0, gyr.data());
      mm(Op::N, Op::N, h, w, w, -1.0, g, w, val(3), w, 0.0, gyi.data());
      // gB_r += G^T Y_r ; gB_i += -G^T Y_i
      mm(Op::T, Op::N, w, w, h, 1.0, g, w, yr, w, 1.0, grad(2));
      mm(Op::T, Op::N, w, w, h, -1.0, g, w, yi, w, 1.0, grad(3));
      // gA_r += gY_r X_r^T + gY_i X_i^T ; gA_i += -gY_r X_i^T + gY_i X_r^T
      mm(Op::N, Op::T, h, h, w, 1.0, gyr.data(), w, xr, w, 1.0, grad(0));
      mm(Op::N, Op::T, h, h, w, 1.0, gyi.data(), w, xi, w, 1.0, grad(0));
      mm(Op::N, Op::T, h, h, w, -1.0, gyr.data(), w, xi, w, 1.0, grad(1));
      mm(Op::N, Op::T, h, h, w, 1.0, gyi.data(), w, xr, w, 1.0, grad(1));
      // gX_r = A_r^T gY_r + A_i^T gY_i ; gX_i = -A_i^T gY_r + A_r^T gY_i
      double *gxr = &g_in.at(b, c, 0, 0);
      double *gxi = &g_in.at(b, pairs + c, 0, 0);
      mm(Op::T, Op::N, h, w, h, 1.0, val(0), h, gyr.data(), w, 0.0, gxr);
      mm(Op::T, Op::N, h, w, h, 1.0, val(1), h, gyi.data(), w, 1.0, gxr);
      mm(Op::T, Op::N, h, w, h, -1.0, val(1), h, gyr.data(), w, 0.0, gxi);
      mm(Op::T, Op::N, h, w, h, 1.0, val(0), h, gyi.data(), w, 1.0, gxi);
    }
  }

  TransformSpec spec_;
  std::vector<Param> params_;
  Tensor input_;
  std::vector<double> left_;     // cached W1 x products
  std::vector<double> spec_out_; // cached (X_R, X_I) for the amplitude path
};

class GlobalAvgPool final : public Layer {
public:
  Tensor forward(const Tensor &input) override {
    detail::require_rank4(input, "gap");
    in_shape_ = input.shape();
    const std::size_t plane = input.dim(2) * input.dim(3);
    Tensor out({input.dim(0), input.dim(1), 1, 1});
    for (std::size_t s = 0; s < input.dim(0) * input.dim(1); ++s) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i)
        acc += input[s * plane + i];
      out[s] = acc / static_cast<double>(plane);
    }
    last_output_shape_ = out.shape();
    return out;
  }

  Tensor backward(const Tensor &grad_out) override {
    check_grad_shape(grad_out);
    Tensor g(in_shape_);
    const std::size_t plane = in_shape_[2] * in_shape_[3];
    for (std::size_t s = 0; s < in_shape_[0] * in_shape_[1]; ++s) {
      const double v = grad_out[s] / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i)
        g[s * plane + i] = v;
    }
    return g;
  }

  [[nodiscard]] std::string kind() const override { return "gap"; }
  [[nodiscard]] Tensor::Shape output_shape(const Tensor::Shape &chw) const override {
    return {chw.at(0), 1, 1};
  }

private:
  Tensor::Shape in_shape_;
};

/// Fully connected layer: input (B x F, or any B x ... flattening to F) * W + b.
class Dense final : public Layer {
public:
  Dense(std::size_t features, std::size_t classes, bool bias, std::uint64_t seed)
      : features_(features), classes_(classes), has_bias_(bias) {
    if (features == 0 || classes == 0)
      throw std::invalid_argument("Dense: feature and class counts must be positive");
    weight_ = Param("weight", Tensor({features, classes},
                                     glorot_uniform(features * classes, features, classes, seed)));
    if (bias)
      bias_ = Param("bias", Tensor({classes}));
  }

  Tensor forward(const Tensor &input) override {
    const std::size_t batch = input.dim(0);
    if (input.size() != batch * features_)
      throw std::invalid_argument("dense: expected " + std::to_string(features_) +
                                  " features per sample, got input " +
                                  Tensor::shape_string(input.shape()));
    input_ = input;
    Tensor out({batch, classes_});
    linalg::gemm(linalg::Op::N, linalg::Op::N, batch, classes_, features_, 1.0,
                 input.data().data(), features_, weight_.value.data().data(), classes_, 0.0,
                 out.data().data(), classes_);
    if (has_bias_)
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < classes_; ++c)
          out[b * classes_ + c] += bias_.value[c];
    last_output_shape_ = out.shape();
    return out;
  }

  Tensor backward(const Tensor &grad_out) override {
    check_grad_shape(grad_out);
    const std::size_t batch = grad_out.dim(0);
    linalg::gemm(linalg::Op::T, linalg::Op::N, features_, classes_, batch, 1.0,
                 input_.data().data(), features_, grad_out.data().data(), classes_, 1.0,
                 weight_.grad.data().data(), classes_);
    if (has_bias_)
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < classes_; ++c)
          bias_.grad[c] += grad_out[b * classes_ + c];
    Tensor g(input_.shape());
    linalg::gemm(linalg::Op::N, linalg::Op::T, batch, features_, classes_, 1.0,
                 grad_out.data().data(), classes_, weight_.value.data().data(), classes_, 0.0,
                 g.data().data(), features_);
    return g;
  }

  std::vector<Param *> params() override {
    if (has_bias_)
      return {&weight_, &bias_};
    return {&weight_};
  }

  [[nodiscard]] std::string kind() const override { return "dense"; }
  [[nodiscard]] Tensor::Shape output_shape(const Tensor::Shape &chw) const override {
    if (Tensor::element_count(chw) != features_)
      throw std::invalid_argument("dense: expects " + std::to_string(features_) +
                                  " features, got " + Tensor::shape_string(chw));
    return {classes_};
  }

private:
  std::size_t features_;
  std::size_t classes_;
  bool has_bias_;
  Param weight_;
  Param bias_;
  Tensor input_;
};

} // namespace spectral
