#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "sparsecap/gradcheck.hpp"
#include "sparsecap/model.hpp"
#include "sparsecap/video_encoder.hpp"

using namespace sparsecap;
using testutil::tiny_config;

TEST(TokenGrid, Counts) {
  const PatchConfig p;
  EXPECT_EQ(token_grid(8, 64, 64, p).tokens(), 16u);
  EXPECT_EQ(token_grid(8, 64, 64, p), (GridDims{4, 2, 2}));
  EXPECT_EQ(token_grid(32, 224, 224, p).tokens(), 784u);
  EXPECT_EQ(token_grid(64, 224, 224, p).tokens(), 1568u);
}

TEST(TokenGrid, ErrorsNameAxis) {
  const PatchConfig p;
  auto msg = [&](std::size_t t, std::size_t h, std::size_t w) {
    try {
      token_grid(t, h, w, p);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(msg(7, 64, 64).find("axis T"), std::string::npos);
  EXPECT_NE(msg(8, 48, 64).find("axis H"), std::string::npos);
  EXPECT_NE(msg(8, 64, 40).find("axis W"), std::string::npos);
}

TEST(RawPatches, DefaultBlockLength) {
  const ModelConfig cfg;
  const auto g = generate_clip(1, cfg.generator());
  const auto raw = raw_patches<float>(g.clip, cfg);
  EXPECT_EQ(raw.shape, (Shape{16, 6144}));
}

TEST(RawPatches, LayoutMatchesDirectIndexing) {
  const ModelConfig cfg = tiny_config();
  const VideoClip clip = testutil::random_clip(cfg, 3);
  const auto raw = raw_patches<double>(clip, cfg);
  const GridDims g = cfg.grid();
  const std::size_t pt = cfg.patch.patch_t, ps = cfg.patch.patch_s;
  for (std::size_t ti = 0; ti < g.t; ++ti)
    for (std::size_t hi = 0; hi < g.h; ++hi)
      for (std::size_t wi = 0; wi < g.w; ++wi) {
        const std::size_t tok = (ti * g.h + hi) * g.w + wi;
        std::size_t k = 0;
        for (std::size_t dt = 0; dt < pt; ++dt)
          for (std::size_t y = 0; y < ps; ++y)
            for (std::size_t x = 0; x < ps; ++x)
              for (std::size_t c = 0; c < 3; ++c, ++k)
                ASSERT_EQ(raw(tok, k), clip.at(ti * pt + dt, hi * ps + y, wi * ps + x, c));
      }
}

TEST(RawPatches, ShapeMismatchRaises) {
  const ModelConfig cfg = tiny_config();
  VideoClip wrong(6, cfg.height, cfg.width);
  EXPECT_THROW(raw_patches<float>(wrong, cfg), DimensionError);
}

TEST(EncodeVideo, ShapeContract) {
  const ModelConfig cfg;
  const CaptionModel<float> model(cfg, 1);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto g = generate_clip(s, cfg.generator());
    const auto out = encode_video(model, g.clip);
    EXPECT_EQ(out.shape(), (Shape{16, cfg.encoder.hidden}));
  }
  const VideoClip a = testutil::random_clip(cfg, 1), b = testutil::random_clip(cfg, 2);
  EXPECT_EQ(encode_video(model, std::vector<const VideoClip*>{&a, &b}).shape(), (Shape{32, cfg.encoder.hidden}));
}

TEST(EncodeVideo, ZeroClipFiniteDeterministic) {
  const ModelConfig cfg;
  const CaptionModel<float> model(cfg, 1);
  const VideoClip zero(cfg.frames, cfg.height, cfg.width);
  const auto a = encode_video(model, zero).value();
  const auto b = encode_video(model, zero).value();
  EXPECT_EQ(a.data, b.data);
  for (float v : a.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(EncodeVideo, BatchMatchesSingle) {
  const ModelConfig cfg = tiny_config();
  const CaptionModel<double> model(cfg, 4);
  const VideoClip a = testutil::random_clip(cfg, 1), b = testutil::random_clip(cfg, 2);
  const auto both = encode_video(model, std::vector<const VideoClip*>{&a, &b}).value();
  const auto only_b = encode_video(model, b).value();
  const std::size_t half = only_b.size();
  for (std::size_t i = 0; i < half; ++i) EXPECT_NEAR(both.data[half + i], only_b.data[i], 1e-12);
}

// Derived on a seeded moving clip: position embeddings break time symmetry.
TEST(EncodeVideo, ReversedClipDiffers) {
  const ModelConfig cfg;
  const CaptionModel<double> model(cfg, 1);
  const auto g = generate_clip(42, cfg.generator());
  const auto a = encode_video(model, g.clip).value();
  const auto b = encode_video(model, reverse_frames(g.clip)).value();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  EXPECT_GT(worst, 1e-6);
}

// With position embeddings zeroed, swapping the two temporal halves of the
// clip permutes the output rows the same way.
TEST(EncodeVideo, PermutationEquivariantWithoutPositions) {
  const ModelConfig cfg = tiny_config();
  CaptionModel<double> model(cfg, 2);
  for (auto& v : model.get("video.pos").mutable_value().data) v = 0.0;
  const VideoClip clip = testutil::random_clip(cfg, 8);
  VideoClip swapped = clip;
  const std::size_t fs = clip.frame_size(), pt = cfg.patch.patch_t;
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    const std::size_t src = (t + pt) % cfg.frames;
    std::copy_n(clip.pixels.begin() + src * fs, fs, swapped.pixels.begin() + t * fs);
  }
  const auto a = encode_video(model, clip).value();
  const auto b = encode_video(model, swapped).value();
  const GridDims g = model.grid();
  const std::size_t d = a.cols(), sp = g.spatial();
  for (std::size_t tok = 0; tok < g.tokens(); ++tok) {
    const std::size_t moved = (tok + (g.t - 1) * sp) % g.tokens();
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(b(moved, j), a(tok, j), 1e-12);
  }
  // And with positions restored the output is no longer a permutation.
  CaptionModel<double> with_pos(cfg, 2);
  const auto c = encode_video(with_pos, clip).value();
  const auto e = encode_video(with_pos, swapped).value();
  double worst = 0.0;
  for (std::size_t tok = 0; tok < g.tokens(); ++tok) {
    const std::size_t moved = (tok + (g.t - 1) * sp) % g.tokens();
    for (std::size_t j = 0; j < d; ++j) worst = std::max(worst, std::abs(e(moved, j) - c(tok, j)));
  }
  EXPECT_GT(worst, 1e-9);
}

TEST(EncodeVideo, PatchProjectionGradCheck) {
  const ModelConfig cfg = tiny_config();
  CaptionModel<double> model(cfg, 3);
  // Larger weights make the check sensitive to every path.
  for (auto& p : model.params())
    for (auto& v : p.var.mutable_value().data) v *= 10.0;
  const VideoClip clip = testutil::random_clip(cfg, 5);
  Tensor<double> w({model.video_tokens(), cfg.encoder.hidden});
  SplitMix64 g(11);
  for (auto& v : w.data) v = g.uniform() - 0.5;
  const auto weights = Var<double>::constant(w);
  GradCheckOptions opts;
  opts.max_coords_per_param = 40;
  opts.seed = 1;
  const auto report = grad_check_report([&] { return sum(mul(encode_video(model, clip), weights)); },
                                        {model.get("video.patch.w"), model.get("video.patch.b")}, opts);
  EXPECT_LE(report.max_rel_error, 1e-5);
  EXPECT_GT(report.coords_checked, 0u);
}
