#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "sparsecap/gradcheck.hpp"
#include "sparsecap/mask_tools.hpp"
#include "sparsecap/model.hpp"
#include "sparsecap/multimodal.hpp"
#include "sparsecap/video_encoder.hpp"

using namespace sparsecap;
using testutil::tiny_config;
using V = Var<double>;

namespace {

V filled(std::size_t m, double v) { return V::parameter(Tensor<double>({m, m}, v)); }

}  // namespace

TEST(AttentionBias, SoftZeroLogits) {
  const AttentionLayout lay{2, 3};
  const auto b = build_attention_bias(lay, filled(3, 0.0), MaskMode::kSoft).value();
  ASSERT_EQ(b.shape, (Shape{5, 5}));
  for (std::size_t i = 2; i < 5; ++i)
    for (std::size_t j = 2; j < 5; ++j) {
      EXPECT_EQ(b(i, j), std::log(0.5 + 1e-8));
      EXPECT_NEAR(b(i, j), -0.6931, 1e-4);
    }
}

TEST(AttentionBias, BinaryThreshold) {
  const AttentionLayout lay{1, 2};
  Tensor<double> p({2, 2}, {10.0, -10.0, 10.0, 10.0});
  const auto b = build_attention_bias(lay, V::constant(p), MaskMode::kBinary).value();
  EXPECT_EQ(b(1, 1), 0.0);
  EXPECT_EQ(b(1, 2), -kBlocked);
  EXPECT_EQ(b(2, 1), 0.0);
  EXPECT_EQ(b(2, 2), 0.0);
}

TEST(AttentionBias, BinaryRowKeepsDiagonalWhenEmpty) {
  const AttentionLayout lay{1, 2};
  const auto b = build_attention_bias(lay, filled(2, -10.0), MaskMode::kBinary).value();
  EXPECT_EQ(b(1, 1), 0.0);
  EXPECT_EQ(b(1, 2), -kBlocked);
  EXPECT_EQ(b(2, 2), 0.0);
}

TEST(AttentionBias, StructuralRegions) {
  const AttentionLayout lay{4, 3};
  for (MaskMode mode : {MaskMode::kFull, MaskMode::kSoft, MaskMode::kBinary}) {
    const auto b = build_attention_bias(lay, filled(3, 1.0), mode).value();
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(b(i, j), j <= i ? 0.0 : -kBlocked);
      for (std::size_t j = 4; j < 7; ++j) EXPECT_EQ(b(i, j), 0.0);
    }
    for (std::size_t i = 4; i < 7; ++i)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(b(i, j), -kBlocked);
  }
  const auto full = build_attention_bias(lay, filled(3, -30.0), MaskMode::kFull).value();
  for (std::size_t i = 4; i < 7; ++i)
    for (std::size_t j = 4; j < 7; ++j) EXPECT_EQ(full(i, j), 0.0);
}

TEST(AttentionBias, HeuristicUsesFixedMask) {
  const GridDims g{4, 1, 1};
  const MaskGrid fixed = heuristic_mask(HeuristicKind::kTemporalWindow, 1, g);
  const auto b = build_attention_bias(AttentionLayout{2, 4}, filled(4, 3.0), MaskMode::kHeuristic, &fixed).value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      EXPECT_EQ(b(2 + i, 2 + j), fixed.at(i, j) == 1.0 ? 0.0 : -kBlocked);
}

TEST(AttentionBias, DimensionMismatchRaises) {
  EXPECT_THROW(build_attention_bias(AttentionLayout{2, 3}, filled(4, 0.0), MaskMode::kSoft), DimensionError);
}

TEST(AttentionBias, GradientOnlyInSoftMode) {
  const AttentionLayout lay{2, 3};
  EXPECT_TRUE(build_attention_bias(lay, filled(3, 0.0), MaskMode::kSoft).requires_grad());
  EXPECT_FALSE(build_attention_bias(lay, filled(3, 0.0), MaskMode::kBinary).requires_grad());
  EXPECT_FALSE(build_attention_bias(lay, filled(3, 0.0), MaskMode::kFull).requires_grad());
}

TEST(SparsityLoss, Examples) {
  EXPECT_EQ(sparsity_loss(filled(4, -1000.0), 1.0).item(), 0.0);
  EXPECT_EQ(sparsity_loss(filled(4, 0.0), 1.0).item(), 0.5);
  Tensor<double> p({2, 2}, {0.3, -1.2, 2.0, 0.0});
  double mean = 0.0;
  for (double v : p.data) mean += 1.0 / (1.0 + std::exp(-v));
  mean /= 4.0;
  EXPECT_NEAR(sparsity_loss(V::constant(p), 5.0).item(), 5.0 * mean, 1e-15);
  EXPECT_THROW(sparsity_loss(filled(2, 0.0), -1.0), Error);
}

TEST(SparsityLoss, GradientClosedForm) {
  const std::size_t m = 5;
  SplitMix64 g(3);
  Tensor<double> p({m, m});
  for (auto& v : p.data) v = 4.0 * g.uniform() - 2.0;
  V pv = V::parameter(p);
  const double lambda = 5.0;
  backward(sparsity_loss(pv, lambda));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-p.data[i]));
    EXPECT_NEAR(pv.grad()[i], lambda * s * (1.0 - s) / double(m * m), 1e-15);
  }
  EXPECT_LE(grad_check([&] { return sparsity_loss(pv, lambda); }, {pv}), 1e-5);
}

TEST(SoftBias, GradCheck) {
  SplitMix64 g(9);
  Tensor<double> p({3, 3});
  for (auto& v : p.data) v = 4.0 * g.uniform() - 2.0;
  V pv = V::parameter(p);
  Tensor<double> w({5, 5});
  for (auto& v : w.data) v = g.uniform();
  const V wv = V::constant(w);
  // Blocked entries are constant; weighting them only shifts the loss.
  EXPECT_LE(grad_check([&] { return sum(mul(build_attention_bias(AttentionLayout{2, 3}, pv, MaskMode::kSoft), wv)); },
                       {pv}),
            1e-5);
}

class ForwardTest : public ::testing::Test {
 protected:
  ModelConfig cfg = tiny_config();
  std::size_t n() const { return cfg.encoder.text_len; }
};

TEST_F(ForwardTest, ShapeContract) {
  const CaptionModel<float> model(cfg, 1);
  const VideoClip clip = testutil::random_clip(cfg, 1);
  const auto ids = testutil::random_ids(n(), model.vocab_size(), 2);
  const auto logits = forward_mlm(model, ids, encode_video(model, clip), 1);
  EXPECT_EQ(logits.shape(), (Shape{n(), model.vocab_size()}));
  const auto short_ids = testutil::random_ids(n() - 1, model.vocab_size(), 2);
  EXPECT_THROW(forward_mlm(model, short_ids, encode_video(model, clip), 1), DimensionError);
  auto bad = ids;
  bad[0] = static_cast<std::int32_t>(model.vocab_size());
  EXPECT_THROW(forward_mlm(model, bad, encode_video(model, clip), 1), Error);
}

TEST_F(ForwardTest, ExactlyOneMaskParameter) {
  const CaptionModel<float> model(cfg, 1);
  std::size_t masks = 0;
  for (const auto& p : model.params()) {
    if (p.name.rfind("mask.", 0) == 0) {
      ++masks;
      EXPECT_EQ(p.var.shape(), (Shape{model.video_tokens(), model.video_tokens()}));
    }
  }
  EXPECT_EQ(masks, 1u);
}

TEST_F(ForwardTest, FullEquivalenceAtLargeLogits) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    CaptionModel<float> model(cfg, seed);
    for (auto& v : model.mask_logits().mutable_value().data) v = 40.0f;
    const VideoClip clip = testutil::random_clip(cfg, seed + 10);
    const auto ids = testutil::random_ids(n(), model.vocab_size(), seed + 20);
    const auto video = encode_video(model, clip);
    model.set_mode(MaskMode::kSoft);
    const auto soft = forward_mlm(model, ids, video, 1).value();
    model.set_mode(MaskMode::kFull);
    const auto full = forward_mlm(model, ids, video, 1).value();
    for (std::size_t i = 0; i < soft.size(); ++i) EXPECT_NEAR(soft.data[i], full.data[i], 1e-5);
  }
}

TEST_F(ForwardTest, CausalPerturbation) {
  const CaptionModel<double> model(cfg, 5);
  const VideoClip clip = testutil::random_clip(cfg, 5);
  const auto video = encode_video(model, clip);
  const auto ids = testutil::random_ids(n(), model.vocab_size(), 7);
  const auto base = forward_mlm(model, ids, video, 1).value();
  const std::size_t vsz = model.vocab_size();
  for (std::size_t j = 0; j < n(); ++j) {
    auto changed = ids;
    changed[j] = static_cast<std::int32_t>((changed[j] + 1) % vsz);
    const auto out = forward_mlm(model, changed, video, 1).value();
    for (std::size_t i = 0; i < j; ++i)
      for (std::size_t k = 0; k < vsz; ++k) ASSERT_EQ(out(i, k), base(i, k)) << "i=" << i << " j=" << j;
    // Position j itself does see its own token.
    double diff = 0.0;
    for (std::size_t k = 0; k < vsz; ++k) diff = std::max(diff, std::abs(out(j, k) - base(j, k)));
    EXPECT_GT(diff, 0.0);
  }
}

TEST_F(ForwardTest, VideoRowsIndependentOfCaption) {
  const CaptionModel<double> model(cfg, 6);
  const VideoClip clip = testutil::random_clip(cfg, 6);
  const auto video = encode_video(model, clip);
  MlmTrace<double> a, b;
  forward_mlm(model, testutil::random_ids(n(), model.vocab_size(), 1), video, 1, &a);
  forward_mlm(model, testutil::random_ids(n(), model.vocab_size(), 2), video, 1, &b);
  ASSERT_EQ(a.layer_inputs.size(), cfg.encoder.layers);
  const std::size_t d = cfg.encoder.hidden, m = model.video_tokens();
  for (std::size_t l = 0; l < a.layer_inputs.size(); ++l)
    for (std::size_t r = n(); r < n() + m; ++r)
      for (std::size_t c = 0; c < d; ++c) ASSERT_EQ(a.layer_inputs[l](r, c), b.layer_inputs[l](r, c));
  // Text rows do change.
  EXPECT_NE(a.layer_inputs[0](1, 0), b.layer_inputs[0](1, 0));
}

TEST_F(ForwardTest, BatchMatchesSingles) {
  const CaptionModel<double> model(cfg, 7);
  const VideoClip c1 = testutil::random_clip(cfg, 1), c2 = testutil::random_clip(cfg, 2);
  const auto i1 = testutil::random_ids(n(), model.vocab_size(), 3);
  const auto i2 = testutil::random_ids(n(), model.vocab_size(), 4);
  std::vector<std::int32_t> both(i1);
  both.insert(both.end(), i2.begin(), i2.end());
  const auto batched = forward_mlm(model, both, encode_video(model, std::vector<const VideoClip*>{&c1, &c2}), 2).value();
  const auto single = forward_mlm(model, i2, encode_video(model, c2), 1).value();
  for (std::size_t i = 0; i < single.size(); ++i) EXPECT_NEAR(batched.data[single.size() + i], single.data[i], 1e-12);
}

TEST_F(ForwardTest, Deterministic) {
  const CaptionModel<float> model(cfg, 8);
  const VideoClip clip = testutil::random_clip(cfg, 8);
  const auto ids = testutil::random_ids(n(), model.vocab_size(), 8);
  EXPECT_EQ(forward_mlm(model, ids, encode_video(model, clip), 1).value().data,
            forward_mlm(model, ids, encode_video(model, clip), 1).value().data);
}
