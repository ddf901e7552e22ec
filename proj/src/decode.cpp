#include "sparsecap/decode.hpp"

#include "sparsecap/multimodal.hpp"
#include "sparsecap/video_encoder.hpp"

namespace sparsecap {

template <typename T>
std::vector<DecodeOutput> greedy_decode_tokens(const CaptionModel<T>& model, const Var<T>& video,
                                               std::size_t batch, const DecodeConfig& cfg) {
  const std::size_t n = model.text_len();
  const std::size_t max_len = cfg.max_len == 0 ? n - 1 : cfg.max_len;
  if (max_len > n - 1) {
    throw ConfigError("decode max length must lie in [1, " + std::to_string(n - 1) + "], got " +
                      std::to_string(cfg.max_len));
  }
  const std::size_t m = model.video_tokens();
  if (video.shape() != Shape{batch * m, model.config().encoder.hidden}) {
    throw DimensionError("greedy_decode: video tokens " + shape_str(video.shape()) +
                         " do not match the model layout (M=" + std::to_string(m) + ")");
  }
  NoGradGuard no_grad;
  const Var<T> bias = model_attention_bias(model);
  const std::size_t vocab = model.vocab_size();
  std::vector<DecodeOutput> out(batch);
  std::vector<std::int32_t> ids(batch * n, kPad);
  for (std::size_t b = 0; b < batch; ++b) ids[b * n] = kBos;
  std::vector<bool> done(batch, false);

  for (std::size_t t = 1; t <= max_len; ++t) {
    // Only unfinished clips are re-run.
    std::vector<std::size_t> live;
    for (std::size_t b = 0; b < batch; ++b)
      if (!done[b]) live.push_back(b);
    if (live.empty()) break;
    std::vector<std::int32_t> sub(live.size() * n);
    std::vector<Var<T>> vids;
    for (std::size_t k = 0; k < live.size(); ++k) {
      std::copy(ids.begin() + live[k] * n, ids.begin() + (live[k] + 1) * n, sub.begin() + k * n);
      sub[k * n + t] = kMask;
      if (live.size() != batch) vids.push_back(slice(video, live[k] * m, m, 0, video.value().cols()));
    }
    const Var<T> v = live.size() == batch ? video : (vids.size() == 1 ? vids.front() : concat_rows(vids));
    const Var<T> logits = forward_mlm(model, sub, v, live.size(), bias);
    for (std::size_t k = 0; k < live.size(); ++k) {
      const auto row = logits.value().row(k * n + t);
      std::int32_t best = 0;
      for (std::size_t j = 1; j < vocab; ++j)
        if (row[j] > row[best]) best = static_cast<std::int32_t>(j);
      const std::size_t b = live[k];
      ids[b * n + t] = best;
      out[b].tokens.push_back(best);
      out[b].steps = t;
      if (best == cfg.end_token) done[b] = true;
    }
  }
  return out;
}

template <typename T>
std::vector<std::string> greedy_decode(const CaptionModel<T>& model,
                                       const std::vector<const VideoClip*>& clips,
                                       const DecodeConfig& cfg) {
  Var<T> video;
  {
    NoGradGuard no_grad;
    video = encode_video(model, clips);
  }
  const auto toks = greedy_decode_tokens(model, video, clips.size(), cfg);
  std::vector<std::string> out;
  out.reserve(toks.size());
  for (const auto& d : toks) out.push_back(decode_ids(d.tokens, model.config().vocab));
  return out;
}

template <typename T>
std::vector<std::string> decode_source(const CaptionModel<T>& model, const ClipSource& source,
                                       const DecodeConfig& cfg, std::size_t chunk) {
  std::vector<std::string> out;
  out.reserve(source.size());
  for (std::size_t start = 0; start < source.size(); start += chunk) {
    const std::size_t end = std::min(source.size(), start + chunk);
    std::vector<VideoClip> clips;
    clips.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) clips.push_back(source.clip(i));
    std::vector<const VideoClip*> ptrs;
    for (const auto& c : clips) ptrs.push_back(&c);
    for (auto& s : greedy_decode(model, ptrs, cfg)) out.push_back(std::move(s));
  }
  return out;
}

template <typename T>
double validation_cider(const CaptionModel<T>& model, const ClipSource& source, const DecodeConfig& cfg) {
  const auto preds = decode_source(model, source, cfg);
  std::vector<std::vector<std::string>> refs(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) refs[i].push_back(source.caption(i));
  return cider_d(make_corpus(preds, refs));
}

#define SPARSECAP_INSTANTIATE(T)                                                                    \
  template std::vector<DecodeOutput> greedy_decode_tokens(const CaptionModel<T>&, const Var<T>&,   \
                                                          std::size_t, const DecodeConfig&);       \
  template std::vector<std::string> greedy_decode(const CaptionModel<T>&,                          \
                                                  const std::vector<const VideoClip*>&,            \
                                                  const DecodeConfig&);                            \
  template std::vector<std::string> decode_source(const CaptionModel<T>&, const ClipSource&,       \
                                                  const DecodeConfig&, std::size_t);               \
  template double validation_cider(const CaptionModel<T>&, const ClipSource&, const DecodeConfig&);

SPARSECAP_INSTANTIATE(float)
SPARSECAP_INSTANTIATE(double)

#undef SPARSECAP_INSTANTIATE

}  // namespace sparsecap
