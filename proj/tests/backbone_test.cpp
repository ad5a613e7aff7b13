#include <gtest/gtest.h>

#include "vaut/backbone.hpp"
#include "vaut/gradcheck.hpp"

using namespace vaut;
using T64 = Tensor<double>;

namespace {

void fill(Tensor<double>& t, double v) {
  for (auto& x : t.mutable_values()) x = v;
}

T64 weighted_sum(const T64& y) {
  Rng rng(1234);
  return sum(mul(y, normal_tensor<double>(y.shape(), 0.0, 1.0, rng)));
}

}  // namespace

TEST(WidthRule, ZeroSlopeGivesOneStage) {
  const auto widths = generate_widths({24, 0, 2.5, 6, 8});
  EXPECT_EQ(widths, std::vector<std::size_t>(6, 24));
  EXPECT_EQ(widths_to_stages(widths).size(), 1u);
}

TEST(WidthRule, DirectEvaluation) {
  // raw 24,48,72,96 → exponents 0,1,round(log2 3)=2,2 → 24,48,96,96
  EXPECT_EQ(generate_widths({24, 24, 2, 4, 8}), (std::vector<std::size_t>{24, 48, 96, 96}));
  const auto stages = widths_to_stages({24, 48, 96, 96});
  ASSERT_EQ(stages.size(), 3u);
  EXPECT_EQ(stages[2].depth, 2u);
}

TEST(WidthRule, NonDecreasingMultiplesOfQuantum) {
  Rng rng(3);
  int accepted = 0;
  for (int trial = 0; trial < 300; ++trial) {
    WidthRule rule{rng.uniform(8, 64), rng.uniform(0, 48), rng.uniform(1.5, 3.0),
                   static_cast<std::size_t>(rng.integer(1, 16)), static_cast<std::size_t>(rng.integer(1, 3)) * 4};
    std::vector<std::size_t> widths;
    try {
      widths = generate_widths(rule);
    } catch (const ConfigError&) {
      continue;
    }
    ++accepted;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      EXPECT_EQ(widths[i] % rule.quantum, 0u);
      if (i) EXPECT_GE(widths[i], widths[i - 1]);
    }
  }
  EXPECT_GT(accepted, 100);
}

TEST(WidthRule, TooManyStagesRejected) {
  EXPECT_THROW(generate_widths({8, 64, 1.5, 20, 8}), ConfigError);
  BackboneConfig cfg;
  EXPECT_THROW(cfg.apply_width_rule({24, 0, 2, 4, 8}), ConfigError);
  cfg.apply_width_rule({16, 24, 2, 6, 8});
  EXPECT_NO_THROW(cfg.validate());
}

TEST(BackboneConfig, Validation) {
  BackboneConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.stage_widths[1] = 20;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.se_ratio = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.n_frozen_stages = 5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(norm_groups(24), 8u);
  EXPECT_EQ(norm_groups(12), 6u);
  EXPECT_EQ(norm_groups(3), 3u);
}

TEST(SqueezeExcite, SaturatedGatePassesInput) {
  Rng rng(4);
  auto se = SqueezeExcite<double>::create(8, 0.25, rng);
  fill(se.expand.bias, 1e4);
  fill(se.expand.weight, 0.0);
  T64 x = normal_tensor<double>({2, 8, 3, 3}, 0, 1, rng);
  T64 y = se.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.values()[i], x.values()[i]);
}

TEST(SqueezeExcite, HalfGateHalvesExactly) {
  Rng rng(5);
  auto se = SqueezeExcite<double>::create(8, 0.25, rng);
  fill(se.expand.weight, 0.0);
  fill(se.expand.bias, 0.0);
  T64 x = normal_tensor<double>({2, 8, 3, 3}, 0, 1, rng);
  T64 y = se.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.values()[i], x.values()[i] / 2.0);
}

TEST(SqueezeExcite, GateStrictlyInsideUnitInterval) {
  Rng rng(6);
  auto se = SqueezeExcite<float>::create(16, 0.25, rng);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<float> g = se.gate(normal_tensor<float>({3, 16, 4, 4}, 0, 2, rng));
    for (float v : g.values()) {
      EXPECT_GT(v, 0.0f);
      EXPECT_LT(v, 1.0f);
    }
  }
  EXPECT_THROW(SqueezeExcite<float>::create(2, 0.1, rng), ConfigError);
}

TEST(Bottleneck, ZeroWeightsOpenGateIsReluOfInput) {
  Rng rng(7);
  auto block = BottleneckBlock<double>::create(8, 8, 1, 4, 0.25, rng);
  ASSERT_FALSE(block.shortcut.has_value());
  fill(block.reduce.weight, 0.0);
  fill(block.grouped.weight, 0.0);
  fill(block.restore.weight, 0.0);
  fill(block.se.expand.weight, 0.0);
  fill(block.se.expand.bias, 1e4);
  T64 x = normal_tensor<double>({2, 8, 4, 4}, 0, 1, rng);
  T64 y = block.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.values()[i], std::max(0.0, x.values()[i]));
}

TEST(Bottleneck, StrideTwoHalvesSpatialExtent) {
  Rng rng(8);
  auto block = BottleneckBlock<float>::create(8, 16, 2, 8, 0.25, rng);
  EXPECT_TRUE(block.shortcut.has_value());
  EXPECT_EQ(block.forward(normal_tensor<float>({1, 8, 6, 10}, 0, 1, rng)).shape(), (Shape{1, 16, 3, 5}));
  EXPECT_THROW(block.forward(Tensor<float>({1, 4, 6, 6})), ConfigError);
  EXPECT_THROW(BottleneckBlock<float>::create(8, 12, 1, 8, 0.25, rng), ConfigError);
}

TEST(Bottleneck, ClosedGateLeavesOnlyResidualAndBias) {
  Rng rng(9);
  auto block = BottleneckBlock<double>::create(8, 16, 2, 8, 0.25, rng);
  fill(block.se.expand.weight, 0.0);
  fill(block.se.expand.bias, -1e4);
  for (std::size_t c = 0; c < 16; ++c) block.restore.beta.mutable_values()[c] = 0.1 * static_cast<double>(c) - 0.5;
  T64 x = normal_tensor<double>({1, 8, 4, 4}, 0, 1, rng);
  T64 y = block.forward(x);

  // Expected: relu(shortcut(x) + restore.beta) per channel.
  T64 residual = block.shortcut->forward(x);
  T64 expected = relu(add(residual, reshape(block.restore.beta, {1, 16, 1, 1})));
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y.values()[i], expected.values()[i]);

  // Main-branch weights no longer matter.
  for (auto& v : block.reduce.weight.mutable_values()) v *= -3.0;
  for (auto& v : block.grouped.weight.mutable_values()) v += 1.0;
  T64 y2 = block.forward(x);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y2.values()[i], y.values()[i]);
}

TEST(Bottleneck, ZeroedExpandHalvesMainBranchActivations) {
  Rng rng(10);
  auto block = BottleneckBlock<double>::create(8, 8, 1, 4, 0.25, rng);
  fill(block.se.expand.weight, 0.0);
  fill(block.se.expand.bias, 0.0);
  T64 x = normal_tensor<double>({2, 8, 4, 4}, 0, 1, rng);
  T64 h = relu(block.grouped.forward(relu(block.reduce.forward(x))));
  T64 gated = block.se.forward(h);
  for (std::size_t i = 0; i < h.numel(); ++i) EXPECT_EQ(gated.values()[i], 0.5 * h.values()[i]);
}

TEST(Backbone, EmbeddingGridFollowsStrideArithmetic) {
  Rng rng(11);
  BackboneConfig cfg;
  cfg.stage_strides = {2, 2, 2, 1};
  Backbone<float> net(cfg, rng);
  auto emb = net.forward(normal_tensor<float>({4, 3, 32, 32}, 0, 1, rng), 1);
  EXPECT_EQ(emb.data.shape(), (Shape{1, 4, 64, 2, 2}));
  EXPECT_EQ(emb.channels(), cfg.stage_widths[3]);

  Backbone<float> micro(BackboneConfig{}, rng);
  auto e2 = micro.forward(normal_tensor<float>({6, 3, 32, 32}, 0, 1, rng), 2);
  EXPECT_EQ(e2.data.shape(), (Shape{2, 3, 64, 4, 4}));

  try {
    micro.forward(Tensor<float>({1, 3, 36, 32}), 1);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("multiple of 8"), std::string::npos);
  }
}

TEST(Backbone, RandomConfigsMatchClosedFormShape) {
  Rng rng(12);
  for (int trial = 0; trial < 6; ++trial) {
    BackboneConfig cfg;
    cfg.stem_width = 8;
    for (std::size_t s = 0; s < kNumStages; ++s) {
      cfg.stage_widths[s] = 4 * static_cast<std::size_t>(rng.integer(1, 3));
      cfg.stage_strides[s] = static_cast<std::size_t>(rng.integer(1, 2));
      cfg.stage_depths[s] = 1;
    }
    cfg.group_width = 4;
    cfg.n_frozen_stages = 0;
    Backbone<float> net(cfg, rng);
    const std::size_t size = cfg.total_stride() * static_cast<std::size_t>(rng.integer(1, 2));
    auto emb = net.forward(normal_tensor<float>({2, 3, size, size}, 0, 1, rng), 2);
    EXPECT_EQ(emb.data.shape(), (Shape{2, 1, cfg.stage_widths[3], size / cfg.total_stride(), size / cfg.total_stride()}));
  }
}

TEST(Backbone, FreezeStagesSetsTrainability) {
  Rng rng(13);
  Backbone<float> net(BackboneConfig{}, rng);
  auto count_trainable = [&](const std::string& prefix) {
    std::size_t n = 0, total = 0;
    for (const auto& p : net.parameters()) {
      if (p.name.rfind(prefix, 0) != 0) continue;
      ++total;
      if (p.tensor.requires_grad()) ++n;
    }
    return std::pair{n, total};
  };
  net.freeze_stages(0);
  for (const auto& p : net.parameters()) EXPECT_TRUE(p.tensor.requires_grad()) << p.name;
  net.freeze_stages(1);
  EXPECT_EQ(count_trainable("backbone.stem").first, 0u);
  EXPECT_EQ(count_trainable("backbone.s1").first, 0u);
  auto s2 = count_trainable("backbone.s2");
  EXPECT_EQ(s2.first, s2.second);
  net.freeze_stages(4);
  for (const auto& p : net.parameters()) EXPECT_FALSE(p.tensor.requires_grad()) << p.name;
  EXPECT_THROW(net.freeze_stages(5), UsageError);
}

TEST(Backbone, MicroConfigFiniteDifferenceCheck) {
  Rng rng(14);
  BackboneConfig cfg;
  cfg.stem_width = 8;
  cfg.stage_widths = {8, 8, 8, 8};
  cfg.stage_depths = {1, 1, 1, 1};
  cfg.group_width = 4;
  cfg.stage_strides = {1, 2, 2, 1};
  cfg.n_frozen_stages = 0;
  Backbone<double> net(cfg, rng);
  T64 frames = normal_tensor<double>({2, 3, 16, 16}, 0, 1, rng);
  std::vector<T64> params;
  for (const auto& p : net.parameters()) params.push_back(p.tensor);
  const double err =
      finite_diff_check_params([&] { return weighted_sum(net.forward(frames, 1).data); }, params, 1e-5, 6, rng);
  EXPECT_LT(err, 1e-4);
  EXPECT_LT(finite_diff_check([&](const T64& x) { return weighted_sum(net.features(x)); }, frames.clone(), 1e-5),
            1e-4);
}
