#pragma once

// The network family: three conv stages (optionally followed by a matrix
// transform), global average pooling and a dense classifier. Also the
// parameter-budget fitting that keeps all variants comparable.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "spectral/errors.hpp"
#include "spectral/layers.hpp"
#include "spectral/rng.hpp"

namespace spectral {

enum class Arch { BaselineConv, BaselineDeep, Single, Multi };

[[nodiscard]] constexpr std::string_view to_string(Arch a) noexcept {
  switch (a) {
  case Arch::BaselineConv: return "BaselineConv";
  case Arch::BaselineDeep: return "BaselineDeep";
  case Arch::Single: return "Single";
  case Arch::Multi: return "Multi";
  }
  return "?";
}

[[nodiscard]] inline Arch arch_from_string(std::string_view s) {
  if (s == "BaselineConv") return Arch::BaselineConv;
  if (s == "BaselineDeep") return Arch::BaselineDeep;
  if (s == "Single") return Arch::Single;
  if (s == "Multi") return Arch::Multi;
  throw std::invalid_argument("unknown architecture '" + std::string(s) + "'");
}

[[nodiscard]] inline InitKind init_from_string(std::string_view s) {
  if (s == "RND") return InitKind::RND;
  if (s == "DCT") return InitKind::DCT;
  if (s == "DFT") return InitKind::DFT;
  throw std::invalid_argument("unknown init kind '" + std::string(s) + "'");
}

struct StageKernel {
  std::size_t kernel = 5;
  std::size_t stride = 2;
  std::size_t padding = 2;
};

struct ModelConfig {
  std::string name; ///< display name; derived from arch/init when empty
  Arch arch = Arch::BaselineConv;
  InitKind init = InitKind::DCT;
  std::array<std::size_t, 3> input_shape{3, 32, 32}; ///< C, H, W
  std::size_t num_classes = 10;
  std::array<StageKernel, 3> stage_kernels{};
  std::array<std::size_t, 3> stage_channels{32, 48, 64};
  std::size_t extra_channels = 0; ///< BaselineDeep extra conv width, 0 means stage-1 width
  std::size_t budget = 135000;
  double budget_tol = 0.035;
  bool fit_budget = true;
  double leaky_slope = 0.01;
  ComplexOutput dft_output_mode = ComplexOutput::Concat;
  bool conv_bias = false;
  bool dense_bias = false;
  bool freeze_transforms = false;

  [[nodiscard]] bool has_transforms() const noexcept {
    return arch == Arch::Single || arch == Arch::Multi;
  }

  [[nodiscard]] std::string display_name() const {
    if (!name.empty())
      return name;
    if (!has_transforms())
      return std::string(to_string(arch));
    return std::string(to_string(init)) + "-" + std::string(to_string(arch));
  }

  /// Canonical text form; also the input of the config hash.
  [[nodiscard]] std::string canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "arch=" << to_string(arch) << ";init=" << to_string(init) << ";input=" << input_shape[0]
       << "x" << input_shape[1] << "x" << input_shape[2] << ";classes=" << num_classes;
    for (const auto &k : stage_kernels)
      os << ";k" << k.kernel << "s" << k.stride << "p" << k.padding;
    os << ";channels=" << stage_channels[0] << "," << stage_channels[1] << "," << stage_channels[2]
       << ";extra=" << extra_channels << ";slope=" << leaky_slope
       << ";dft_out=" << (dft_output_mode == ComplexOutput::Concat ? "concat" : "amplitude")
       << ";conv_bias=" << conv_bias << ";dense_bias=" << dense_bias
       << ";frozen=" << freeze_transforms;
    return os.str();
  }
};

/// Three 5x5 stride-2 stages, sized for 32x32-class inputs.
[[nodiscard]] inline ModelConfig default_model_config(Arch arch, InitKind init) {
  ModelConfig c;
  c.arch = arch;
  c.init = init;
  return c;
}

// ---------------------------------------------------------------------------
// Layer plan: the layer sequence implied by a config, without allocation.

struct LayerPlan {
  enum class Type { Conv, Transform, LeakyRelu, Gap, Dense } type;
  ConvSpec conv{};
  TransformSpec transform{};
  std::size_t dense_in = 0;
  std::size_t dense_out = 0;
  bool dense_bias = false;
  double slope = 0.01;
};

struct LayerInfo {
  std::size_t index = 0;
  std::string kind;
  Tensor::Shape output; ///< per-sample shape
  std::size_t params = 0;
};

struct ModelDescription {
  std::string name;
  std::vector<LayerInfo> layers;
  std::size_t total_params = 0;

  [[nodiscard]] std::string to_text() const {
    std::ostringstream os;
    os << name << '\n';
    os << std::left << std::setw(6) << "idx" << std::setw(22) << "layer" << std::setw(16)
       << "output" << std::right << std::setw(10) << "params" << '\n';
    for (const auto &l : layers)
      os << std::left << std::setw(6) << l.index << std::setw(22) << l.kind << std::setw(16)
         << Tensor::shape_string(l.output) << std::right << std::setw(10) << l.params << '\n';
    os << std::left << std::setw(44) << "total" << std::right << std::setw(10) << total_params
       << '\n';
    return os.str();
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["total_params"] = total_params;
    j["layers"] = nlohmann::json::array();
    for (const auto &l : layers)
      j["layers"].push_back(
          {{"index", l.index}, {"kind", l.kind}, {"output", l.output}, {"params", l.params}});
    return j;
  }
};

namespace detail {

inline TransformKind stage_transform_kind(const ModelConfig &c, std::size_t stage) {
  const bool inverse = c.arch == Arch::Multi && stage == 1;
  switch (c.init) {
  case InitKind::DCT: return inverse ? TransformKind::DctIIIInverse : TransformKind::DctII;
  case InitKind::DFT: return inverse ? TransformKind::DftInverse : TransformKind::DftForward;
  case InitKind::RND: return TransformKind::RandomNormalized;
  }
  return TransformKind::RandomNormalized;
}

inline bool stage_has_transform(const ModelConfig &c, std::size_t stage) {
  return c.arch == Arch::Multi || (c.arch == Arch::Single && stage == 0);
}

inline std::string layer_label(std::size_t index, const std::string &kind) {
  return "layer " + std::to_string(index) + " (" + kind + ")";
}

inline std::string kind_of(const LayerPlan &p) {
  switch (p.type) {
  case LayerPlan::Type::Conv: return "conv";
  case LayerPlan::Type::Transform: return "transform:" + std::string(to_string(p.transform.kind));
  case LayerPlan::Type::LeakyRelu: return "leaky_relu";
  case LayerPlan::Type::Gap: return "gap";
  case LayerPlan::Type::Dense: return "dense";
  }
  return "?";
}

} // namespace detail

/// Ordered layer plan for a config plus its shape/parameter description.
/// Throws ConfigError naming the first layer whose shape does not chain.
inline std::vector<LayerPlan> plan_model(const ModelConfig &c, ModelDescription *desc = nullptr) {
  std::vector<LayerPlan> plan;
  if (c.input_shape[0] == 0 || c.input_shape[1] == 0 || c.input_shape[2] == 0)
    throw ConfigError("input shape must be positive");
  if (c.num_classes == 0)
    throw ConfigError("num_classes must be positive");
  Tensor::Shape shape{c.input_shape[0], c.input_shape[1], c.input_shape[2]};
  ModelDescription d;
  d.name = c.display_name();

  auto push = [&](LayerPlan p, std::size_t params, Tensor::Shape out) {
    d.layers.push_back({plan.size(), detail::kind_of(p), out, params});
    d.total_params += params;
    plan.push_back(std::move(p));
    shape = std::move(out);
  };
  auto fail = [&](const LayerPlan &p, const std::string &why) {
    throw ConfigError(d.name + ": " + detail::layer_label(plan.size(), detail::kind_of(p)) + ": " +
                      why);
  };
  auto add_conv = [&](std::size_t out_ch, const StageKernel &k) {
    LayerPlan p{LayerPlan::Type::Conv};
    p.conv = ConvSpec{shape[0], out_ch, k.kernel, k.kernel, k.stride, k.padding, c.conv_bias};
    if (out_ch == 0)
      fail(p, "zero output channels");
    if (k.kernel == 0 || k.stride == 0)
      fail(p, "kernel and stride must be positive");
    const std::size_t oh = ConvSpec::out_extent(shape[1], k.kernel, k.stride, k.padding);
    const std::size_t ow = ConvSpec::out_extent(shape[2], k.kernel, k.stride, k.padding);
    if (oh == 0 || ow == 0)
      fail(p, std::to_string(k.kernel) + "x" + std::to_string(k.kernel) +
                  " kernel does not fit the " + std::to_string(shape[1]) + "x" +
                  std::to_string(shape[2]) + " input");
    push(p, count_conv_params(p.conv), {out_ch, oh, ow});
  };
  auto add_leaky = [&] {
    LayerPlan p{LayerPlan::Type::LeakyRelu};
    p.slope = c.leaky_slope;
    if (!(c.leaky_slope > 0.0 && c.leaky_slope < 1.0))
      fail(p, "leaky slope must lie in (0, 1)");
    push(p, 0, shape);
  };

  for (std::size_t stage = 0; stage < 3; ++stage) {
    add_conv(c.stage_channels[stage], c.stage_kernels[stage]);
    if (detail::stage_has_transform(c, stage)) {
      LayerPlan p{LayerPlan::Type::Transform};
      p.transform.kind = detail::stage_transform_kind(c, stage);
      p.transform.height = shape[1];
      p.transform.width = shape[2];
      p.transform.output = c.dft_output_mode;
      p.transform.frozen = c.freeze_transforms;
      std::size_t ch = shape[0];
      if (p.transform.kind == TransformKind::DftForward && c.dft_output_mode == ComplexOutput::Concat)
        ch *= 2;
      if (p.transform.kind == TransformKind::DftInverse) {
        if (ch % 2 != 0)
          fail(p, "inverse DFT needs an even channel count (real/imaginary pairs), got " +
                      std::to_string(ch));
        ch /= 2;
      }
      const std::size_t n = c.freeze_transforms
                                ? 0
                                : count_transform_params(p.transform.kind, shape[1], shape[2]);
      push(p, n, {ch, shape[1], shape[2]});
    }
    add_leaky();
    if (c.arch == Arch::BaselineDeep && stage == 0) {
      const StageKernel k = c.stage_kernels[0];
      add_conv(c.extra_channels ? c.extra_channels : c.stage_channels[0],
               StageKernel{k.kernel, 1, k.kernel / 2});
      add_leaky();
    }
  }
  {
    LayerPlan p{LayerPlan::Type::Gap};
    push(p, count_gap_params(), {shape[0], 1, 1});
  }
  {
    LayerPlan p{LayerPlan::Type::Dense};
    p.dense_in = shape[0];
    p.dense_out = c.num_classes;
    p.dense_bias = c.dense_bias;
    push(p, count_dense_params(shape[0], c.num_classes, c.dense_bias), {c.num_classes});
  }
  if (desc)
    *desc = std::move(d);
  return plan;
}

[[nodiscard]] inline ModelDescription describe_model(const ModelConfig &c) {
  ModelDescription d;
  plan_model(c, &d);
  return d;
}

/// Sequential network owning its layers.
class Model {
public:
  Model() = default;
  Model(std::vector<std::unique_ptr<Layer>> layers, ModelDescription desc)
      : layers_(std::move(layers)), desc_(std::move(desc)) {}

  Tensor forward(const Tensor &input) {
    Tensor x = input;
    for (auto &l : layers_)
      x = l->forward(x);
    return x;
  }

  /// Forward up to and including layer `last`.
  Tensor forward_until(const Tensor &input, std::size_t last) {
    Tensor x = input;
    for (std::size_t i = 0; i <= last && i < layers_.size(); ++i)
      x = layers_[i]->forward(x);
    return x;
  }

  Tensor backward(const Tensor &grad_out) {
    Tensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      g = (*it)->backward(g);
    return g;
  }

  [[nodiscard]] std::vector<Param *> params() {
    std::vector<Param *> out;
    for (auto &l : layers_)
      for (Param *p : l->params())
        out.push_back(p);
    return out;
  }

  [[nodiscard]] std::size_t trainable_count() {
    std::size_t n = 0;
    for (auto &l : layers_)
      n += l->trainable_count();
    return n;
  }

  [[nodiscard]] std::size_t size() const noexcept { return layers_.size(); }
  [[nodiscard]] Layer &layer(std::size_t i) { return *layers_.at(i); }
  [[nodiscard]] const ModelDescription &description() const noexcept { return desc_; }

private:
  std::vector<std::unique_ptr<Layer>> layers_;
  ModelDescription desc_;
};

/// Instantiate the config; every random draw derives from `seed`.
[[nodiscard]] inline Model build_model(const ModelConfig &c, std::uint64_t seed) {
  ModelDescription desc;
  const auto plan = plan_model(c, &desc);
  std::vector<std::unique_ptr<Layer>> layers;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const LayerPlan &p = plan[i];
    const std::uint64_t layer_seed = derive_key(seed, i);
    switch (p.type) {
    case LayerPlan::Type::Conv: layers.push_back(std::make_unique<Conv2d>(p.conv, layer_seed)); break;
    case LayerPlan::Type::Transform: {
      TransformSpec t = p.transform;
      t.seed = layer_seed;
      layers.push_back(std::make_unique<MatrixTransformLayer>(t));
      break;
    }
    case LayerPlan::Type::LeakyRelu: layers.push_back(std::make_unique<LeakyRelu>(p.slope)); break;
    case LayerPlan::Type::Gap: layers.push_back(std::make_unique<GlobalAvgPool>()); break;
    case LayerPlan::Type::Dense:
      layers.push_back(std::make_unique<Dense>(p.dense_in, p.dense_out, p.dense_bias, layer_seed));
      break;
    }
  }
  return Model(std::move(layers), std::move(desc));
}

// ---------------------------------------------------------------------------
// Budget fitting

struct BudgetFit {
  ModelConfig config;
  std::size_t achieved = 0;
};

[[nodiscard]] inline bool within_budget(std::size_t count, std::size_t budget, double tol) noexcept {
  const double b = static_cast<double>(budget);
  const double n = static_cast<double>(count);
  return n >= b * (1.0 - tol) - 1e-9 && n <= b * (1.0 + tol) + 1e-9;
}

/// Coordinate descent over the channel counts: visit the widest stage first,
/// set it to the value whose total is nearest the budget, repeat until a full
/// pass changes nothing. Equal distances resolve toward the mean width of the
/// other stages, then toward the smaller width.
[[nodiscard]] inline BudgetFit fit_budget(const ModelConfig &config) {
  if (config.budget == 0)
    throw std::invalid_argument("fit_budget: budget must be positive");
  ModelConfig c = config;
  const bool deep = c.arch == Arch::BaselineDeep;
  if (deep && c.extra_channels == 0)
    c.extra_channels = c.stage_channels[0];
  const std::size_t coords = deep ? 4 : 3;
  auto ref = [&](std::size_t i) -> std::size_t & {
    return i < 3 ? c.stage_channels[i] : c.extra_channels;
  };
  // The stage feeding an inverse DFT carries real/imaginary pairs.
  auto step_of = [&](std::size_t i) -> std::size_t {
    return (i == 1 && c.arch == Arch::Multi && c.init == InitKind::DFT) ? 2 : 1;
  };
  for (std::size_t i = 0; i < coords; ++i) {
    const std::size_t st = step_of(i);
    if (ref(i) < st)
      ref(i) = st;
    ref(i) = (ref(i) + st - 1) / st * st;
  }

  const ModelConfig initial = c;
  auto total = [&]() { return describe_model(c).total_params; };
  auto dist = [&](std::size_t n) {
    return n > c.budget ? n - c.budget : c.budget - n;
  };
  // Counts within half the tolerance count as ties, so balance decides
  // between them. A greedy exact hit can otherwise starve later stages.
  const auto tie_band = static_cast<std::size_t>(
      std::floor(static_cast<double>(c.budget) * c.budget_tol / 2.0));
  auto score = [&](std::size_t n) {
    const std::size_t d = dist(n);
    return d <= tie_band ? 0 : d;
  };

  constexpr std::size_t max_width = 1 << 16;

  // Rescale every width by one factor first, keeping the starting proportions.
  if (score(total()) != 0) {
    ModelConfig best_c = c;
    std::size_t best_d = dist(total());
    for (int j = -256; j <= 256; ++j) {
      const double alpha = std::exp2(j / 32.0);
      for (std::size_t i = 0; i < coords; ++i) {
        const std::size_t st = step_of(i);
        const double s0 = static_cast<double>(i < 3 ? initial.stage_channels[i] : initial.extra_channels);
        const double units = std::max(1.0, std::round(alpha * s0 / static_cast<double>(st)));
        ref(i) = std::min(max_width, static_cast<std::size_t>(units) * st);
      }
      std::size_t d = 0;
      try {
        d = dist(total());
      } catch (const ConfigError &) {
        continue;
      }
      if (d < best_d) {
        best_d = d;
        best_c = c;
      }
    }
    c = best_c;
  }

  for (int pass = 0; pass < 64; ++pass) {
    std::vector<std::size_t> order(coords);
    for (std::size_t i = 0; i < coords; ++i)
      order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ref(a) > ref(b); });
    bool changed = false;
    for (std::size_t i : order) {
      const std::size_t st = step_of(i);
      const std::size_t saved = ref(i);
      double others = 0.0;
      for (std::size_t j = 0; j < coords; ++j)
        if (j != i)
          others += static_cast<double>(ref(j));
      others /= static_cast<double>(coords - 1);

      // The total is affine in one width with the others fixed.
      ref(i) = st;
      const double f0 = static_cast<double>(total());
      ref(i) = 2 * st;
      const double slope = static_cast<double>(total()) - f0;
      std::vector<std::size_t> cand{saved};
      if (slope > 0.0) {
        const double units = (static_cast<double>(c.budget) - f0) / slope;
        const double base = std::floor(units);
        for (double u : {base - 1.0, base, base + 1.0, base + 2.0}) {
          const double w = (u + 1.0) * static_cast<double>(st);
          if (w >= static_cast<double>(st) && w <= static_cast<double>(max_width))
            cand.push_back(static_cast<std::size_t>(w));
        }
      }
      cand.push_back(st);
      std::size_t best = saved;
      std::size_t best_d = std::numeric_limits<std::size_t>::max();
      for (std::size_t w : cand) {
        ref(i) = w;
        const std::size_t d = score(total());
        const double eq_new = std::abs(static_cast<double>(w) - others);
        const double eq_old = std::abs(static_cast<double>(best) - others);
        if (d < best_d || (d == best_d && (eq_new < eq_old || (eq_new == eq_old && w < best)))) {
          best = w;
          best_d = d;
        }
      }
      ref(i) = best;
      if (best != saved)
        changed = true;
    }
    if (!changed)
      break;
  }

  // Coarse budgets can trap the descent. Fall back to enumerating the other
  // widths on a bounded grid and solving the widest stage directly.
  if (!within_budget(total(), c.budget, c.budget_tol)) {
    std::size_t solve = 0;
    for (std::size_t i = 1; i < coords; ++i)
      if (ref(i) > ref(solve))
        solve = i;
    std::vector<std::size_t> free_coords;
    for (std::size_t i = 0; i < coords; ++i)
      if (i != solve)
        free_coords.push_back(i);
    const auto limit = static_cast<std::size_t>(
        std::floor(std::pow(20000.0, 1.0 / static_cast<double>(free_coords.size()))));
    const ModelConfig start = c;
    ModelConfig best_c = c;
    std::size_t best_d = std::numeric_limits<std::size_t>::max();
    double best_spread = std::numeric_limits<double>::max();
    std::vector<std::size_t> units(free_coords.size(), 1);
    while (true) {
      c = start;
      for (std::size_t k = 0; k < free_coords.size(); ++k)
        ref(free_coords[k]) = units[k] * step_of(free_coords[k]);
      const std::size_t st = step_of(solve);
      ref(solve) = st;
      const bool chain_ok = [&] {
        try {
          (void)total();
          return true;
        } catch (const ConfigError &) {
          return false;
        }
      }();
      if (chain_ok) {
        const double f0 = static_cast<double>(total());
        ref(solve) = 2 * st;
        const double slope = static_cast<double>(total()) - f0;
        if (slope > 0.0) {
          const double u = std::round((static_cast<double>(c.budget) - f0) / slope);
          for (double du : {-1.0, 0.0, 1.0}) {
            const double w = (u + du + 1.0) * static_cast<double>(st);
            if (w < static_cast<double>(st) || w > static_cast<double>(max_width))
              continue;
            ref(solve) = static_cast<std::size_t>(w);
            const std::size_t n = total();
            // In-tolerance candidates rank by how far they move from the
            // starting proportions; others by distance to the budget.
            const std::size_t d = within_budget(n, c.budget, c.budget_tol) ? 0 : dist(n);
            double spread = 0.0;
            for (std::size_t i = 0; i < coords; ++i) {
              const auto s0 = static_cast<double>(i < 3 ? initial.stage_channels[i] : initial.extra_channels);
              spread += std::abs(std::log(static_cast<double>(ref(i)) / s0));
            }
            if (d < best_d || (d == best_d && spread < best_spread)) {
              best_d = d;
              best_spread = spread;
              best_c = c;
            }
          }
        }
      }
      std::size_t k = 0;
      while (k < units.size() && ++units[k] > limit)
        units[k++] = 1;
      if (k == units.size())
        break;
    }
    c = best_c;
  }

  const std::size_t achieved = total();
  if (!within_budget(achieved, c.budget, c.budget_tol)) {
    std::vector<std::size_t> nearest{achieved};
    for (std::size_t i = 0; i < coords; ++i) {
      const std::size_t saved = ref(i);
      ref(i) = saved + step_of(i);
      nearest.push_back(total());
      if (saved > step_of(i)) {
        ref(i) = saved - step_of(i);
        nearest.push_back(total());
      }
      ref(i) = saved;
    }
    std::sort(nearest.begin(), nearest.end());
    nearest.erase(std::unique(nearest.begin(), nearest.end()), nearest.end());
    std::string list;
    for (std::size_t n : nearest)
      list += (list.empty() ? "" : ", ") + std::to_string(n);
    throw InfeasibleBudget(c.display_name() + ": no channel assignment within " +
                               std::to_string(c.budget_tol * 100.0) + "% of " +
                               std::to_string(c.budget) + " (nearest achievable: " + list + ")",
                           std::move(nearest));
  }
  return {c, achieved};
}

} // namespace spectral
