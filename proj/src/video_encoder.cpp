#include "sparsecap/video_encoder.hpp"

#include "transformer.hpp"

namespace sparsecap {

GridDims token_grid(std::size_t frames, std::size_t height, std::size_t width, const PatchConfig& p) {
  ModelConfig c;
  c.frames = frames;
  c.height = height;
  c.width = width;
  c.patch = p;
  return c.grid();
}

template <typename T>
Tensor<T> raw_patches(const VideoClip& clip, const ModelConfig& cfg) {
  if (clip.frames != cfg.frames || clip.height != cfg.height || clip.width != cfg.width) {
    throw DimensionError("clip " + std::to_string(clip.frames) + "x" + std::to_string(clip.height) +
                         "x" + std::to_string(clip.width) + " does not match model input " +
                         std::to_string(cfg.frames) + "x" + std::to_string(cfg.height) + "x" +
                         std::to_string(cfg.width));
  }
  const GridDims g = cfg.grid();
  const std::size_t pt = cfg.patch.patch_t, ps = cfg.patch.patch_s;
  const std::size_t len = pt * ps * ps * 3;
  Tensor<T> out({g.tokens(), len});
  std::size_t row = 0;
  for (std::size_t tt = 0; tt < g.t; ++tt)
    for (std::size_t hy = 0; hy < g.h; ++hy)
      for (std::size_t wx = 0; wx < g.w; ++wx, ++row) {
        T* dst = out.data.data() + row * len;
        for (std::size_t dt = 0; dt < pt; ++dt)
          for (std::size_t y = 0; y < ps; ++y) {
            const float* src = &clip.pixels[(((tt * pt + dt) * clip.height + hy * ps + y) * clip.width + wx * ps) * 3];
            for (std::size_t k = 0; k < ps * 3; ++k) *dst++ = static_cast<T>(src[k]);
          }
      }
  return out;
}

template <typename T>
Var<T> patchify(const CaptionModel<T>& model, const std::vector<const VideoClip*>& clips) {
  if (clips.empty()) throw Error("patchify: empty batch");
  const auto& cfg = model.config();
  const std::size_t m = model.video_tokens();
  const std::size_t len = cfg.patch.patch_t * cfg.patch.patch_s * cfg.patch.patch_s * 3;
  Tensor<T> stacked({clips.size() * m, len});
  for (std::size_t b = 0; b < clips.size(); ++b) {
    const Tensor<T> one = raw_patches<T>(*clips[b], cfg);
    std::copy(one.data.begin(), one.data.end(), stacked.data.begin() + b * m * len);
  }
  const Var<T> proj = detail::linear(Var<T>::constant(std::move(stacked)), model.get("video.patch.w"),
                                     model.get("video.patch.b"));
  return add(proj, repeat_rows(model.get("video.pos"), clips.size()));
}

template <typename T>
Var<T> encode_video(const CaptionModel<T>& model, const std::vector<const VideoClip*>& clips) {
  const auto& cfg = model.config();
  const std::size_t m = model.video_tokens();
  Var<T> x = patchify(model, clips);
  // Full self-attention inside the stand-in backbone.
  const Var<T> open = Var<T>::constant(Tensor<T>({1, m}));
  for (std::size_t i = 0; i < cfg.patch.depth; ++i) {
    x = detail::transformer_block(model, "video.block" + std::to_string(i), x, clips.size(), m,
                                  cfg.patch.heads, open);
  }
  x = layer_norm(x, model.get("video.ln.g"), model.get("video.ln.b"), static_cast<T>(1e-5));
  const Var<T> h = gelu(detail::linear(x, model.get("video.proj1.w"), model.get("video.proj1.b")));
  return detail::linear(h, model.get("video.proj2.w"), model.get("video.proj2.b"));
}

template Tensor<float> raw_patches(const VideoClip&, const ModelConfig&);
template Tensor<double> raw_patches(const VideoClip&, const ModelConfig&);
template Var<float> patchify(const CaptionModel<float>&, const std::vector<const VideoClip*>&);
template Var<double> patchify(const CaptionModel<double>&, const std::vector<const VideoClip*>&);
template Var<float> encode_video(const CaptionModel<float>&, const std::vector<const VideoClip*>&);
template Var<double> encode_video(const CaptionModel<double>&, const std::vector<const VideoClip*>&);

}  // namespace sparsecap
