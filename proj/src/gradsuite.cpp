#include "sparsecap/gradsuite.hpp"

#include <algorithm>
#include <functional>

#include "sparsecap/autodiff.hpp"
#include "sparsecap/gradcheck.hpp"
#include "sparsecap/multimodal.hpp"
#include "sparsecap/rng.hpp"
#include "sparsecap/video_encoder.hpp"

namespace sparsecap {

namespace {

using V = Var<double>;

Tensor<double> draw(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Magnitudes in [0.2, 1] with random sign, away from the kink of |x|.
Tensor<double> draw_off_zero(Shape shape, SplitMix64& rng) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) {
    const double mag = 0.2 + 0.8 * rng.uniform();
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

struct Check {
  std::string module;
  std::string name;
  // Builds parameters and the loss for one draw.
  std::function<std::pair<std::function<V()>, std::vector<V>>(SplitMix64&)> make;
  std::size_t max_coords = 0;
};

ModelConfig tiny_config() {
  ModelConfig c;
  c.frames = 4;
  c.height = 8;
  c.width = 8;
  c.patch.patch_t = 2;
  c.patch.patch_s = 4;
  c.patch.width = 8;
  c.patch.depth = 1;
  c.patch.heads = 2;
  c.encoder.hidden = 8;
  c.encoder.layers = 2;
  c.encoder.heads = 2;
  c.encoder.ffn = 16;
  c.encoder.text_len = 6;
  c.encoder.mode = MaskMode::kSoft;
  c.vocab = Vocabulary({"[PAD]", "[MASK]", "[BOS]", "[EOS]", "[UNK]", "a", "red", "square", "moves", "left"});
  return c;
}

VideoClip noise_clip(const ModelConfig& c, SplitMix64& rng) {
  VideoClip clip(c.frames, c.height, c.width);
  for (auto& p : clip.pixels) p = static_cast<float>(rng.uniform());
  return clip;
}

std::vector<Check> build_checks() {
  std::vector<Check> cs;
  const std::string ad = "tensor-autodiff";
  auto unary_check = [&](const char* name, std::function<V(const V&)> f, bool positive, bool off_zero) {
    cs.push_back({ad, name, [f, positive, off_zero](SplitMix64& rng) {
                    V x = V::parameter(off_zero ? draw_off_zero({3, 4}, rng)
                                                : positive ? draw({3, 4}, rng, 0.2, 2.0) : draw({3, 4}, rng, -3, 3));
                    auto w = draw({3, 4}, rng);
                    return std::pair{std::function<V()>([=] { return sum(mul(f(x), V::constant(w))); }),
                                     std::vector<V>{x}};
                  }});
  };
  cs.push_back({ad, "matmul", [](SplitMix64& rng) {
                  V a = V::parameter(draw({3, 4}, rng)), b = V::parameter(draw({4, 5}, rng));
                  auto w = draw({3, 5}, rng);
                  return std::pair{std::function<V()>([=] { return sum(mul(matmul(a, b), V::constant(w))); }),
                                   std::vector<V>{a, b}};
                }});
  cs.push_back({ad, "matmul_nt", [](SplitMix64& rng) {
                  V a = V::parameter(draw({3, 4}, rng)), b = V::parameter(draw({5, 4}, rng));
                  auto w = draw({3, 5}, rng);
                  return std::pair{std::function<V()>([=] { return sum(mul(matmul_nt(a, b), V::constant(w))); }),
                                   std::vector<V>{a, b}};
                }});
  cs.push_back({ad, "add_mul", [](SplitMix64& rng) {
                  V a = V::parameter(draw({2, 3}, rng)), b = V::parameter(draw({2, 3}, rng));
                  auto w = draw({2, 3}, rng);
                  return std::pair{std::function<V()>([=] { return sum(mul(add(mul(a, b), a), V::constant(w))); }),
                                   std::vector<V>{a, b}};
                }});
  cs.push_back({ad, "add_bias_scale_shift", [](SplitMix64& rng) {
                  V x = V::parameter(draw({3, 4}, rng)), b = V::parameter(draw({4}, rng));
                  auto w = draw({3, 4}, rng);
                  return std::pair{std::function<V()>([=] {
                                     return sum(mul(add_scalar(scale(add_bias(x, b), 1.7), 0.3), V::constant(w)));
                                   }),
                                   std::vector<V>{x, b}};
                }});
  unary_check("sigmoid", [](const V& x) { return sigmoid(x); }, false, false);
  unary_check("gelu", [](const V& x) { return gelu(x); }, false, false);
  unary_check("abs", [](const V& x) { return abs(x); }, false, true);
  unary_check("log", [](const V& x) { return log(x); }, true, false);
  cs.push_back({ad, "sum_mean", [](SplitMix64& rng) {
                  V x = V::parameter(draw({3, 4}, rng));
                  return std::pair{std::function<V()>([=] { return add(mul(sum(x), mean(x)), mean(mul(x, x))); }),
                                   std::vector<V>{x}};
                }});
  cs.push_back({ad, "masked_softmax", [](SplitMix64& rng) {
                  V l = V::parameter(draw({4, 5}, rng, -2, 2)), b = V::parameter(draw({4, 5}, rng, -2, 0));
                  auto w = draw({4, 5}, rng);
                  return std::pair{std::function<V()>([=] { return sum(mul(masked_softmax(l, b), V::constant(w))); }),
                                   std::vector<V>{l, b}};
                }});
  cs.push_back({ad, "masked_softmax_broadcast", [](SplitMix64& rng) {
                  V l = V::parameter(draw({4, 5}, rng, -2, 2)), b = V::parameter(draw({1, 5}, rng, -2, 0));
                  auto w = draw({4, 5}, rng);
                  return std::pair{std::function<V()>([=] { return sum(mul(masked_softmax(l, b), V::constant(w))); }),
                                   std::vector<V>{l, b}};
                }});
  cs.push_back({ad, "layer_norm", [](SplitMix64& rng) {
                  V x = V::parameter(draw({3, 6}, rng, -2, 2));
                  V g = V::parameter(draw({6}, rng, 0.5, 1.5)), b = V::parameter(draw({6}, rng));
                  auto w = draw({3, 6}, rng);
                  return std::pair{std::function<V()>([=] {
                                     return sum(mul(layer_norm(x, g, b, 1e-5), V::constant(w)));
                                   }),
                                   std::vector<V>{x, g, b}};
                }});
  cs.push_back({ad, "embedding", [](SplitMix64& rng) {
                  V table = V::parameter(draw({6, 3}, rng));
                  std::vector<std::int32_t> ids = {1, 4, 1, 0, 5};
                  auto w = draw({5, 3}, rng);
                  return std::pair{std::function<V()>([=] {
                                     return sum(mul(embedding(table, std::span<const std::int32_t>(ids)), V::constant(w)));
                                   }),
                                   std::vector<V>{table}};
                }});
  cs.push_back({ad, "cross_entropy_mlm", [](SplitMix64& rng) {
                  V logits = V::parameter(draw({4, 6}, rng, -2, 2));
                  std::vector<std::int32_t> targets = {2, 0, 5, 1};
                  std::vector<std::uint8_t> sup = {1, 0, 1, 1};
                  return std::pair{std::function<V()>([=] {
                                     return cross_entropy_mlm(logits, std::span<const std::int32_t>(targets),
                                                              std::span<const std::uint8_t>(sup));
                                   }),
                                   std::vector<V>{logits}};
                }});
  cs.push_back({ad, "slice_concat_repeat", [](SplitMix64& rng) {
                  V a = V::parameter(draw({4, 5}, rng)), b = V::parameter(draw({2, 3}, rng));
                  auto w1 = draw({6, 3}, rng);
                  auto w2 = draw({2, 8}, rng);
                  return std::pair{std::function<V()>([=] {
                                     const V s = slice(a, 1, 2, 1, 3);
                                     const V r = concat_rows<double>({repeat_rows(s, 2), b});
                                     const V c = concat_cols<double>({b, slice(a, 0, 2, 0, 5)});
                                     return add(sum(mul(r, V::constant(w1))), sum(mul(c, V::constant(w2))));
                                   }),
                                   std::vector<V>{a, b}};
                }});
  cs.push_back({ad, "overlay", [](SplitMix64& rng) {
                  V blk = V::parameter(draw({2, 2}, rng));
                  Tensor<double> base = draw({4, 4}, rng);
                  auto w = draw({4, 4}, rng);
                  return std::pair{std::function<V()>([=] { return sum(mul(overlay(base, blk, 1, 2), V::constant(w))); }),
                                   std::vector<V>{blk}};
                }});

  cs.push_back({"video-encoder", "patch_projection", [](SplitMix64& rng) {
                  const ModelConfig c = tiny_config();
                  auto model = std::make_shared<CaptionModel<double>>(c, rng.next());
                  auto clip = std::make_shared<VideoClip>(noise_clip(c, rng));
                  const V out_w = V::constant(draw({c.grid().tokens(), c.encoder.hidden}, rng));
                  return std::pair{std::function<V()>([=] { return sum(mul(encode_video(*model, *clip), out_w)); }),
                                   std::vector<V>{model->get("video.patch.w"), model->get("video.patch.b"),
                                                  model->get("video.pos")}};
                },
                24});
  cs.push_back({"multimodal-encoder", "soft_attention_bias", [](SplitMix64& rng) {
                  V p = V::parameter(draw({4, 4}, rng, -3, 3));
                  auto w = draw({7, 7}, rng);
                  return std::pair{std::function<V()>([=] {
                                     return sum(mul(build_attention_bias(AttentionLayout{3, 4}, p, MaskMode::kSoft),
                                                    V::constant(w)));
                                   }),
                                   std::vector<V>{p}};
                }});
  cs.push_back({"multimodal-encoder", "sparsity_loss", [](SplitMix64& rng) {
                  V p = V::parameter(draw({4, 4}, rng, -3, 3));
                  return std::pair{std::function<V()>([=] { return sparsity_loss(p, 5.0); }), std::vector<V>{p}};
                }});
  cs.push_back({"training", "composite_loss", [](SplitMix64& rng) {
                  const ModelConfig c = tiny_config();
                  auto model = std::make_shared<CaptionModel<double>>(c, rng.next());
                  // Spread the mask so the sparsity path is exercised away from saturation.
                  for (auto& v : model->mask_logits().mutable_value().data) v = -2.0 + 4.0 * rng.uniform();
                  // Larger weights than the 0.02 init so every path carries gradient.
                  for (auto& p : model->params())
                    if (p.name != kMaskParam && p.var.shape().size() == 2)
                      for (auto& v : p.var.mutable_value().data) v *= 10.0;
                  auto clips = std::make_shared<std::vector<VideoClip>>();
                  clips->push_back(noise_clip(c, rng));
                  clips->push_back(noise_clip(c, rng));
                  std::vector<std::int32_t> ids = {2, 5, 1, 7, 3, 0, 2, 1, 6, 1, 8, 3};
                  std::vector<std::int32_t> targets = {0, 0, 6, 0, 0, 0, 0, 5, 0, 7, 0, 0};
                  std::vector<std::uint8_t> sup = {0, 0, 1, 0, 0, 0, 0, 1, 0, 1, 0, 0};
                  std::vector<V> params;
                  for (auto& p : model->params()) params.push_back(p.var);
                  return std::pair{std::function<V()>([=] {
                                     std::vector<const VideoClip*> ptrs{&(*clips)[0], &(*clips)[1]};
                                     const V video = encode_video(*model, ptrs);
                                     const V logits = forward_mlm(*model, std::span<const std::int32_t>(ids), video, 2);
                                     const V l = cross_entropy_mlm(logits, std::span<const std::int32_t>(targets),
                                                                   std::span<const std::uint8_t>(sup));
                                     return add(l, sparsity_loss(model->mask_logits(), 5.0));
                                   }),
                                   params};
                },
                6});
  return cs;
}

}  // namespace

std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed, std::size_t points) {
  std::vector<GradSuiteEntry> out;
  const auto checks = build_checks();
  for (std::size_t ci = 0; ci < checks.size(); ++ci) {
    const Check& check = checks[ci];
    GradSuiteEntry e{check.module, check.name, 0.0, 0};
    for (std::size_t k = 0; k < points; ++k) {
      SplitMix64 rng(mix_seed(seed, ci * 1000 + k));
      auto [loss, params] = check.make(rng);
      GradCheckOptions opt;
      opt.h = 1e-5;
      opt.max_coords_per_param = check.max_coords;
      opt.seed = rng.next();
      const GradCheckReport r = grad_check_report(loss, params, opt);
      e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
      e.coords += r.coords_checked;
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace sparsecap
