#include <gtest/gtest.h>

#include <cmath>

#include "vaut/gradcheck.hpp"
#include "vaut/vivit.hpp"

using namespace vaut;
using T64 = Tensor<double>;

namespace {

void fill(T64& t, double v) {
  for (auto& x : t.mutable_values()) x = v;
}

std::vector<double> vec(const T64& t) { return {t.values().begin(), t.values().end()}; }

void zero_linear(Linear<double>& l) {
  fill(l.weight, 0);
  fill(l.bias, 0);
}

T64 weighted_sum(const T64& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(y, normal_tensor<double>(y.shape(), 0.0, 1.0, rng)));
}

EncoderConfig small_encoder(std::size_t d, std::size_t heads) {
  EncoderConfig cfg;
  cfg.model_dim = d;
  cfg.n_heads = heads;
  cfg.n_spatial_layers = 1;
  cfg.n_temporal_layers = 1;
  cfg.layer_budget = 2;
  cfg.mlp_ratio = 2;
  cfg.max_spatial_positions = 16;
  cfg.max_temporal_positions = 16;
  return cfg;
}

}  // namespace

TEST(Tubelet, TokenCountArithmetic) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    TubeletConfig cfg{static_cast<std::size_t>(rng.integer(1, 3)), static_cast<std::size_t>(rng.integer(1, 2)),
                      static_cast<std::size_t>(rng.integer(1, 2)), 4};
    const std::size_t c = rng.integer(1, 3);
    const std::size_t nt = rng.integer(1, 3), nh = rng.integer(1, 3), nw = rng.integer(1, 3);
    auto emb = TubeletEmbedding<double>::create(cfg, c, rng);
    VideoEmbedding<double> v{normal_tensor<double>({2, nt * cfg.t, c, nh * cfg.h, nw * cfg.w}, 0, 1, rng)};
    const auto seq = emb.forward(v);
    EXPECT_EQ(seq.tokens.shape(), (Shape{2, nt * nh * nw, 4}));
    ASSERT_TRUE(seq.layout);
    EXPECT_EQ(seq.layout->n_t, nt);
    EXPECT_EQ(seq.layout->n_h, nh);
    EXPECT_EQ(seq.layout->n_w, nw);
  }
}

TEST(Tubelet, UnitTubeletWithIdentityProjectionCopiesGrid) {
  Rng rng(2);
  auto emb = TubeletEmbedding<double>::create({1, 1, 1, 1}, 1, rng);
  fill(emb.projection.weight, 1);
  fill(emb.projection.bias, 0);
  VideoEmbedding<double> v{normal_tensor<double>({1, 3, 1, 2, 2}, 0, 1, rng)};
  const auto seq = emb.forward(v);
  EXPECT_EQ(vec(seq.tokens), vec(v.data));
}

TEST(Tubelet, PatchOrderIsChannelTimeRowColumn) {
  Rng rng(3);
  auto emb = TubeletEmbedding<double>::create({2, 2, 2, 16}, 2, rng);
  fill(emb.projection.weight, 0);
  fill(emb.projection.bias, 0);
  for (std::size_t i = 0; i < 16; ++i) emb.projection.weight.mutable_values()[i * 16 + i] = 1;
  // Single tubelet, value = c*8 + dt*4 + dy*2 + dx at position (dt, c, dy, dx).
  T64 data({1, 2, 2, 2, 2}, 0.0);
  for (std::size_t dt = 0; dt < 2; ++dt)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx)
          data.mutable_values()[((dt * 2 + c) * 2 + dy) * 2 + dx] = static_cast<double>(c * 8 + dt * 4 + dy * 2 + dx);
  const auto seq = emb.forward({data});
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(seq.tokens.values()[i], static_cast<double>(i));
}

TEST(Tubelet, PerturbationStaysInsideItsTubelet) {
  Rng rng(4);
  auto emb = TubeletEmbedding<double>::create({2, 2, 2, 5}, 3, rng);
  VideoEmbedding<double> v{normal_tensor<double>({1, 4, 3, 4, 6}, 0, 1, rng)};
  const auto base = emb.forward(v).tokens;
  // Frame 3, channel 1, row 2, col 5 → tubelet (1, 1, 2).
  T64 bumped = v.data.clone();
  bumped.mutable_values()[((3 * 3 + 1) * 4 + 2) * 6 + 5] += 1.0;
  const auto moved = emb.forward({bumped}).tokens;
  const std::size_t hit = (1 * 2 + 1) * 3 + 2;
  for (std::size_t n = 0; n < 12; ++n) {
    bool changed = false;
    for (std::size_t d = 0; d < 5; ++d) changed |= base.values()[n * 5 + d] != moved.values()[n * 5 + d];
    EXPECT_EQ(changed, n == hit) << "token " << n;
  }
}

TEST(Tubelet, IndivisibleExtentsNameTheAxis) {
  Rng rng(5);
  auto emb = TubeletEmbedding<double>::create({2, 2, 2, 4}, 1, rng);
  try {
    emb.forward({T64({1, 3, 1, 4, 4}, 0.0)});
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("temporal"), std::string::npos);
  }
  try {
    emb.forward({T64({1, 2, 1, 4, 3}, 0.0)});
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("width"), std::string::npos);
  }
  EXPECT_THROW(emb.forward({T64({1, 2, 2, 4, 4}, 0.0)}), DimensionError);
}

TEST(Positional, ZeroTableIsIdentity) {
  Rng rng(6);
  TokenSequence<double> seq{normal_tensor<double>({2, 5, 3}, 0, 1, rng), std::nullopt};
  const auto out = add_positional(seq, T64({8, 3}, 0.0));
  EXPECT_EQ(vec(out.tokens), vec(seq.tokens));
}

TEST(Positional, BreaksPermutationSymmetry) {
  Rng rng(7);
  T64 row = normal_tensor<double>({1, 1, 4}, 0, 1, rng);
  TokenSequence<double> seq{concat<double>({row, row, row}, 1), std::nullopt};
  const T64 table = normal_tensor<double>({3, 4}, 0, 1, rng);
  const auto out = vec(add_positional(seq, table).tokens);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b) {
      bool differ = false;
      for (std::size_t d = 0; d < 4; ++d) differ |= out[a * 4 + d] != out[b * 4 + d];
      EXPECT_TRUE(differ);
    }
}

TEST(Positional, GradientReachesUsedRowsOnly) {
  Rng rng(8);
  T64 table = normal_tensor<double>({6, 3}, 0, 1, rng).set_requires_grad(true);
  TokenSequence<double> seq{normal_tensor<double>({2, 4, 3}, 0, 1, rng), std::nullopt};
  backward(sum(add_positional(seq, table).tokens));
  for (std::size_t i = 0; i < 18; ++i) EXPECT_EQ(table.grad()[i], i < 12 ? 2.0 : 0.0);
}

TEST(Positional, ShortTableRejected) {
  TokenSequence<double> seq{T64({1, 5, 3}, 0.0), std::nullopt};
  EXPECT_THROW(add_positional(seq, T64({4, 3}, 0.0)), ConfigError);
  EXPECT_THROW(add_positional(seq, T64({8, 2}, 0.0)), DimensionError);
}

TEST(Attention, SingleTokenAttendsToItself) {
  Rng rng(9);
  auto msa = MultiHeadSelfAttention<double>::create(8, 2, rng);
  T64 weights;
  msa.forward(normal_tensor<double>({3, 1, 8}, 0, 1, rng), &weights);
  EXPECT_EQ(weights.shape(), (Shape{3, 2, 1, 1}));
  for (double w : weights.values()) EXPECT_EQ(w, 1.0);
}

TEST(Attention, IdenticalTokensGiveUniformWeights) {
  Rng rng(10);
  auto msa = MultiHeadSelfAttention<double>::create(6, 3, rng);
  T64 row = normal_tensor<double>({1, 1, 6}, 0, 1, rng);
  T64 weights;
  const T64 out = msa.forward(concat<double>({row, row, row, row}, 1), &weights);
  for (double w : weights.values()) EXPECT_NEAR(w, 0.25, 1e-15);
  for (std::size_t n = 1; n < 4; ++n)
    for (std::size_t d = 0; d < 6; ++d) EXPECT_NEAR(out.values()[n * 6 + d], out.values()[d], 1e-12);
}

TEST(Attention, RowsAreDistributions) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t heads = rng.integer(1, 4);
    const std::size_t d = heads * rng.integer(1, 4);
    auto msa = MultiHeadSelfAttention<float>::create(d, heads, rng);
    Tensor<float> weights;
    msa.forward(normal_tensor<float>({2, static_cast<std::size_t>(rng.integer(1, 9)), d}, 0, 3, rng), &weights);
    const std::size_t n = weights.dim(3);
    for (std::size_t r = 0; r < weights.numel() / n; ++r) {
      double total = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const float w = weights.values()[r * n + j];
        EXPECT_GE(w, 0.0f);
        EXPECT_LE(w, 1.0f);
        total += w;
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(Attention, HeadCountMustDivideDim) {
  Rng rng(12);
  EXPECT_THROW(MultiHeadSelfAttention<double>::create(10, 4, rng), ConfigError);
  EncoderConfig cfg = small_encoder(10, 4);
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TransformerLayer, ZeroedResidualBranchesAreIdentity) {
  Rng rng(13);
  auto layer = TransformerLayer<double>::create(8, 2, 16, rng);
  zero_linear(layer.attention.output);
  zero_linear(layer.mlp.fc2);
  const T64 z = normal_tensor<double>({2, 5, 8}, 0, 1, rng);
  EXPECT_EQ(vec(layer.forward(z)), vec(z));
}

TEST(TransformerLayer, FiniteDifferenceCheck) {
  Rng rng(14);
  auto layer = TransformerLayer<double>::create(8, 2, 16, rng);
  const T64 z = normal_tensor<double>({1, 3, 8}, 0, 1, rng);
  EXPECT_LT(finite_diff_check([&](const T64& x) { return weighted_sum(layer.forward(x)); }, z.clone(), 1e-5), 1e-4);
  ParameterList<double> named;
  layer.collect("layer", named);
  std::vector<T64> params;
  for (const auto& p : named) params.push_back(p.tensor);
  EXPECT_LT(finite_diff_check_params([&] { return weighted_sum(layer.forward(z)); }, params, 1e-5, 8, rng), 1e-4);
}

TEST(Encoder, LayerBudgetEnforced) {
  EncoderConfig cfg = small_encoder(8, 2);
  cfg.n_temporal_layers = 2;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.n_spatial_layers = 0;
  cfg.layer_budget = 2;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(EncoderConfig{}.validate());
}

TEST(Encoder, OutputShapeIsBatchByTemporalTokens) {
  Rng rng(15);
  auto enc = FactorizedEncoder<double>::create(small_encoder(8, 2), rng);
  for (std::size_t nt : {1, 3}) {
    TokenLayout layout{nt, 2, 2};
    const T64 out = enc.forward({normal_tensor<double>({2, layout.count(), 8}, 0, 1, rng), layout});
    EXPECT_EQ(out.shape(), (Shape{2, nt, 8}));
  }
}

TEST(Encoder, SpatialOrderIrrelevantWithoutSpatialPositions) {
  Rng rng(16);
  auto enc = FactorizedEncoder<double>::create(small_encoder(8, 2), rng);
  fill(enc.spatial_table, 0);
  TokenLayout layout{2, 2, 2};
  const T64 tokens = normal_tensor<double>({1, 8, 8}, 0, 1, rng);
  // Reverse the spatial order within each temporal index.
  T64 shuffled = tokens.clone();
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t d = 0; d < 8; ++d)
        shuffled.mutable_values()[(t * 4 + s) * 8 + d] = tokens.values()[(t * 4 + 3 - s) * 8 + d];
  const T64 a = enc.forward({tokens, layout});
  const T64 b = enc.forward({shuffled, layout});
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-5);
}

TEST(Encoder, RequiresLayoutAndMatchingCount) {
  Rng rng(17);
  auto enc = FactorizedEncoder<double>::create(small_encoder(8, 2), rng);
  EXPECT_THROW(enc.forward({T64({1, 4, 8}, 0.0), std::nullopt}), UsageError);
  EXPECT_THROW(enc.forward({T64({1, 5, 8}, 0.0), TokenLayout{1, 2, 2}}), DimensionError);
  EXPECT_THROW(enc.forward({T64({1, 20, 8}, 0.0), TokenLayout{1, 4, 5}}), ConfigError);
}

TEST(Classifier, LogitsRepeatAcrossTubeletFrames) {
  Rng rng(18);
  auto cls = FramewiseClassifier<double>::create(4, rng);
  const T64 feats = normal_tensor<double>({2, 3, 4}, 0, 1, rng);
  const T64 logits = cls.forward(feats, 2, 6);
  ASSERT_EQ(logits.shape(), (Shape{2, 6, kNumAUs}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t f = 0; f < 6; f += 2)
      for (std::size_t k = 0; k < kNumAUs; ++k)
        EXPECT_EQ(logits.values()[(b * 6 + f) * kNumAUs + k], logits.values()[(b * 6 + f + 1) * kNumAUs + k]);
  EXPECT_THROW(cls.forward(feats, 2, 7), DimensionError);
}

TEST(VivitHead, EndToEndShapeAndGradients) {
  Rng rng(19);
  TubeletConfig tub{2, 2, 2, 8};
  VivitHead<double> head(tub, small_encoder(8, 2), 3, rng);
  VideoEmbedding<double> v{normal_tensor<double>({2, 4, 3, 2, 2}, 0, 1, rng)};
  const T64 logits = head.forward(v);
  EXPECT_EQ(logits.shape(), (Shape{2, 4, kNumAUs}));
  backward(weighted_sum(logits));
  for (const auto& p : head.parameters()) {
    EXPECT_TRUE(p.tensor.has_grad()) << p.name;
    EXPECT_EQ(p.name.rfind("head.", 0), 0u);
  }
  EXPECT_THROW(VivitHead<double>({2, 2, 2, 4}, small_encoder(8, 2), 3, rng), ConfigError);
}

TEST(VivitHead, FiniteDifferenceThroughWholeHead) {
  Rng rng(20);
  VivitHead<double> head({1, 1, 1, 4}, small_encoder(4, 2), 2, rng);
  VideoEmbedding<double> v{normal_tensor<double>({1, 2, 2, 2, 1}, 0, 1, rng)};
  std::vector<T64> params;
  for (const auto& p : head.parameters()) params.push_back(p.tensor);
  EXPECT_LT(finite_diff_check_params([&] { return weighted_sum(head.forward(v)); }, params, 1e-5, 4, rng), 1e-4);
}
