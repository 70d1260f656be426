#include <gtest/gtest.h>

#include "spectral/model.hpp"
#include "spectral/oracles.hpp"
#include "test_helpers.hpp"

using namespace spectral;
using spectral::test::random_tensor;

namespace {

const std::vector<std::pair<Arch, InitKind>> kAllModels = {
    {Arch::BaselineConv, InitKind::RND}, {Arch::BaselineDeep, InitKind::RND},
    {Arch::Single, InitKind::RND},       {Arch::Single, InitKind::DCT},
    {Arch::Single, InitKind::DFT},       {Arch::Multi, InitKind::RND},
    {Arch::Multi, InitKind::DCT},        {Arch::Multi, InitKind::DFT},
};

ModelConfig appendix_trunk(Arch arch, InitKind init) {
  ModelConfig c = default_model_config(arch, init);
  c.stage_channels = {24, 32, 48};
  c.stage_kernels = {StageKernel{3, 1, 1}, StageKernel{3, 2, 1}, StageKernel{3, 2, 1}};
  c.fit_budget = false;
  return c;
}

// Per-sample shapes chain: every layer's output feeds the next one's input.
void expect_chain_consistent(Model &model, const ModelConfig &c) {
  Tensor::Shape s{c.input_shape[0], c.input_shape[1], c.input_shape[2]};
  const auto &desc = model.description();
  ASSERT_EQ(desc.layers.size(), model.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    s = model.layer(i).output_shape(s);
    if (desc.layers[i].kind == "dense")
      s = {s[0]};
    EXPECT_EQ(s, desc.layers[i].output) << desc.name << " layer " << i;
    EXPECT_EQ(model.layer(i).trainable_count(), desc.layers[i].params) << desc.name << " layer " << i;
    total += desc.layers[i].params;
  }
  EXPECT_EQ(total, desc.total_params);
  EXPECT_EQ(model.trainable_count(), desc.total_params);
}

std::size_t count_transforms(const ModelDescription &d) {
  std::size_t n = 0;
  for (const auto &l : d.layers)
    n += l.kind.starts_with("transform:");
  return n;
}

} // namespace

TEST(BuildModel, BaselineConvAppendixCounts) {
  const ModelDescription d = describe_model(appendix_trunk(Arch::BaselineConv, InitKind::RND));
  std::vector<std::size_t> conv;
  for (const auto &l : d.layers)
    if (l.kind == "conv")
      conv.push_back(l.params);
  EXPECT_EQ(conv, (std::vector<std::size_t>{648, 6912, 13824}));
  EXPECT_EQ(d.layers.back().kind, "dense");
  EXPECT_EQ(d.layers.back().params, 48u * 10u);
  EXPECT_EQ(d.total_params, 648u + 6912u + 13824u + 480u);
}

TEST(BuildModel, SingleDctAddsTwoSquaredMapSize) {
  const auto base = describe_model(appendix_trunk(Arch::BaselineConv, InitKind::RND));
  const auto single = describe_model(appendix_trunk(Arch::Single, InitKind::DCT));
  EXPECT_EQ(single.layers[1].kind, "transform:dct2");
  EXPECT_EQ(single.layers[1].output, (Tensor::Shape{24, 32, 32}));
  EXPECT_EQ(single.total_params - base.total_params, 2u * 32u * 32u);
}

TEST(BuildModel, MultiDftHasThreeTransformsWithInverseSecond) {
  ModelConfig c = default_model_config(Arch::Multi, InitKind::DFT);
  c.fit_budget = false;
  const auto d = describe_model(c);
  EXPECT_EQ(count_transforms(d), 3u);
  std::vector<std::string> kinds;
  for (const auto &l : d.layers)
    if (l.kind.starts_with("transform:"))
      kinds.push_back(l.kind);
  EXPECT_EQ(kinds, (std::vector<std::string>{"transform:dft", "transform:idft", "transform:dft"}));
}

TEST(BuildModel, MultiDctUsesInverseInMiddle) {
  ModelConfig c = default_model_config(Arch::Multi, InitKind::DCT);
  c.fit_budget = false;
  Model m = build_model(c, 1);
  std::size_t seen = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto *t = dynamic_cast<MatrixTransformLayer *>(&m.layer(i));
    if (!t)
      continue;
    const std::size_t h = t->spec().height;
    EXPECT_EQ(t->w1(), seen == 1 ? build_dct3_inverse(h, h) : build_dct2(h, h));
    ++seen;
  }
  EXPECT_EQ(seen, 3u);
}

TEST(BuildModel, MultiRndDrawsIndependentMatrices) {
  ModelConfig c = default_model_config(Arch::Multi, InitKind::RND);
  c.stage_kernels = {StageKernel{3, 1, 1}, StageKernel{3, 1, 1}, StageKernel{3, 1, 1}};
  c.input_shape = {1, 8, 8};
  c.fit_budget = false;
  Model m = build_model(c, 3);
  std::vector<RealMatrix> w;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (auto *t = dynamic_cast<MatrixTransformLayer *>(&m.layer(i)))
      w.push_back(t->w1());
  ASSERT_EQ(w.size(), 3u);
  EXPECT_NE(w[0], w[1]);
  EXPECT_NE(w[1], w[2]);
  EXPECT_NE(w[0], w[2]);
}

TEST(BuildModel, DftConcatDoublingThreadsThroughShapes) {
  ModelConfig c = default_model_config(Arch::Single, InitKind::DFT);
  c.fit_budget = false;
  const auto d = describe_model(c);
  EXPECT_EQ(d.layers[1].output[0], 2 * c.stage_channels[0]);
  // The next conv reads 2C channels.
  EXPECT_EQ(d.layers[3].params, 5u * 5u * 2u * c.stage_channels[0] * c.stage_channels[1]);
}

TEST(BuildModel, BaselineDeepAddsOneConvAfterStageOne) {
  ModelConfig c = default_model_config(Arch::BaselineDeep, InitKind::RND);
  c.fit_budget = false;
  const auto d = describe_model(c);
  std::vector<std::string> kinds;
  for (const auto &l : d.layers)
    kinds.push_back(l.kind);
  EXPECT_EQ(kinds, (std::vector<std::string>{"conv", "leaky_relu", "conv", "leaky_relu", "conv", "leaky_relu",
                                             "conv", "leaky_relu", "gap", "dense"}));
  EXPECT_EQ(d.layers[2].output, d.layers[0].output);
}

TEST(BuildModel, EveryArchitectureOnBothInputShapes) {
  for (const auto &input : {std::array<std::size_t, 3>{1, 28, 28}, std::array<std::size_t, 3>{3, 32, 32}}) {
    for (const auto &[arch, init] : kAllModels) {
      ModelConfig c = default_model_config(arch, init);
      c.input_shape = input;
      c.stage_channels = {8, 12, 16};
      c.fit_budget = false;
      Model m = build_model(c, 7);
      expect_chain_consistent(m, c);
      CounterRng rng(1);
      const Tensor y = m.forward(random_tensor({2, input[0], input[1], input[2]}, rng));
      EXPECT_EQ(y.shape(), (Tensor::Shape{2, c.num_classes})) << c.display_name();
      EXPECT_TRUE(y.all_finite());
    }
  }
}

TEST(BuildModel, BadShapeChainNamesTheLayer) {
  ModelConfig c = default_model_config(Arch::BaselineConv, InitKind::RND);
  c.input_shape = {1, 4, 4};
  c.stage_kernels = {StageKernel{3, 1, 0}, StageKernel{3, 1, 0}, StageKernel{3, 1, 0}};
  c.fit_budget = false;
  try {
    (void)describe_model(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("layer 2 (conv)"), std::string::npos) << e.what();
  }
}

TEST(BuildModel, OddChannelsBeforeInverseDftRejected) {
  ModelConfig c = default_model_config(Arch::Multi, InitKind::DFT);
  c.stage_channels = {8, 7, 8};
  c.fit_budget = false;
  EXPECT_THROW((void)describe_model(c), ConfigError);
}

TEST(BuildModel, SameSeedSameWeights) {
  ModelConfig c = default_model_config(Arch::Multi, InitKind::RND);
  c.stage_channels = {4, 4, 4};
  c.fit_budget = false;
  Model a = build_model(c, 5), b = build_model(c, 5), other = build_model(c, 6);
  auto pa = a.params(), pb = b.params(), po = other.params();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    any_diff |= pa[i]->value != po[i]->value;
  }
  EXPECT_TRUE(any_diff);
}

TEST(BuildModel, SingleSpectralMatchesReferenceOnConvOutput) {
  for (InitKind init : {InitKind::DCT, InitKind::DFT}) {
    ModelConfig c = default_model_config(Arch::Single, init);
    c.stage_channels = {4, 6, 8};
    c.fit_budget = false;
    Model m = build_model(c, 11);
    CounterRng rng(2);
    const Tensor x = random_tensor({2, 3, 32, 32}, rng);
    const Tensor conv = m.forward_until(x, 0);
    const Tensor feat = m.forward_until(x, 1);
    const std::size_t h = conv.dim(2), w = conv.dim(3), ch = conv.dim(1);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t k = 0; k < ch; ++k) {
        RealMatrix xc(h, w);
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j)
            xc(i, j) = conv.at(b, k, i, j);
        double worst = 0.0;
        if (init == InitKind::DCT) {
          const RealMatrix ref = oracle::naive_dct2d(xc, h, w);
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
              worst = std::max(worst, std::abs(feat.at(b, k, i, j) - ref(i, j)));
        } else {
          const auto ref = oracle::naive_dft2d(xc);
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
              worst = std::max(worst, std::abs(feat.at(b, k, i, j) - ref.re(i, j)));
              worst = std::max(worst, std::abs(feat.at(b, ch + k, i, j) - ref.im(i, j)));
            }
        }
        EXPECT_LE(worst, 1e-10) << to_string(init);
      }
  }
}

TEST(FitBudget, DefaultBudgetWithinTolerance) {
  std::vector<std::size_t> achieved;
  for (const auto &[arch, init] : kAllModels) {
    const BudgetFit f = fit_budget(default_model_config(arch, init));
    EXPECT_GE(f.achieved, 130275u) << f.config.display_name();
    EXPECT_LE(f.achieved, 139725u) << f.config.display_name();
    EXPECT_EQ(describe_model(f.config).total_params, f.achieved);
    achieved.push_back(f.achieved);
  }
  // Mutual spread stays inside the tolerance band.
  const auto [lo, hi] = std::minmax_element(achieved.begin(), achieved.end());
  EXPECT_LE(static_cast<double>(*hi - *lo), 2 * 0.035 * 135000);
}

TEST(FitBudget, ExactlyAchievableBudgetIsFixedPoint) {
  ModelConfig c = default_model_config(Arch::Single, InitKind::DCT);
  c.fit_budget = false;
  c.budget = describe_model(c).total_params;
  c.budget_tol = 0.0;
  const BudgetFit f = fit_budget(c);
  EXPECT_EQ(f.achieved, c.budget);
  EXPECT_EQ(f.config.stage_channels, c.stage_channels);
}

TEST(FitBudget, Deterministic) {
  const ModelConfig c = default_model_config(Arch::Multi, InitKind::DFT);
  const BudgetFit a = fit_budget(c), b = fit_budget(c);
  EXPECT_EQ(a.config.stage_channels, b.config.stage_channels);
  EXPECT_EQ(a.achieved, b.achieved);
  EXPECT_EQ(a.config.stage_channels[1] % 2, 0u);
}

TEST(FitBudget, InfeasibleBudgetReportsNearest) {
  ModelConfig c = default_model_config(Arch::Single, InitKind::DCT);
  // Transform alone costs 2 * 16^2; nothing reaches 10 parameters.
  c.budget = 10;
  c.budget_tol = 0.0;
  try {
    (void)fit_budget(c);
    FAIL() << "expected InfeasibleBudget";
  } catch (const InfeasibleBudget &e) {
    EXPECT_FALSE(e.nearest().empty());
    EXPECT_NE(std::string(e.what()).find("nearest achievable"), std::string::npos);
  }
}

TEST(FitBudget, ZeroBudgetRejected) {
  ModelConfig c;
  c.budget = 0;
  EXPECT_THROW((void)fit_budget(c), std::invalid_argument);
}

TEST(ModelDescription, TextAndJsonAgree) {
  const auto d = describe_model(default_model_config(Arch::Single, InitKind::DFT));
  const auto j = d.to_json();
  EXPECT_EQ(j["total_params"].get<std::size_t>(), d.total_params);
  EXPECT_EQ(j["layers"].size(), d.layers.size());
  EXPECT_NE(d.to_text().find(std::to_string(d.total_params)), std::string::npos);
}
