#include "sparsecap/multimodal.hpp"

#include <cmath>

#include "transformer.hpp"

namespace sparsecap {

template <typename T>
Var<T> build_attention_bias(const AttentionLayout& layout, const Var<T>& p, MaskMode mode,
                            const MaskGrid* fixed) {
  const std::size_t n = layout.n, m = layout.m, s = layout.size();
  if (p.shape() != Shape{m, m}) {
    throw DimensionError("attention bias: mask " + shape_str(p.shape()) + " does not match M=" +
                         std::to_string(m));
  }
  const T blocked = -static_cast<T>(kBlocked);
  Tensor<T> base({s, s});
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      if (i < n) {
        base(i, j) = (j < n && j > i) ? blocked : T{0};
      } else {
        base(i, j) = j < n ? blocked : T{0};
      }
    }

  switch (mode) {
    case MaskMode::kFull:
      return Var<T>::constant(std::move(base));
    case MaskMode::kSoft: {
      const Var<T> v = log(add_scalar(sigmoid(p), static_cast<T>(1e-8)));
      return overlay(base, v, n, n);
    }
    case MaskMode::kBinary: {
      const auto& pv = p.value();
      for (std::size_t i = 0; i < m; ++i) {
        bool open = false;
        for (std::size_t j = 0; j < m; ++j) {
          const double a = 1.0 / (1.0 + std::exp(-static_cast<double>(pv(i, j))));
          const bool on = a >= 0.5;
          open = open || on;
          base(n + i, n + j) = on ? T{0} : blocked;
        }
        if (!open) base(n + i, n + i) = T{0};
      }
      return Var<T>::constant(std::move(base));
    }
    case MaskMode::kHeuristic: {
      if (fixed == nullptr || fixed->m() != m) throw DimensionError("heuristic mode needs an M×M mask");
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) base(n + i, n + j) = fixed->at(i, j) >= 0.5 ? T{0} : blocked;
      return Var<T>::constant(std::move(base));
    }
  }
  throw Error("unknown mask mode");
}

template <typename T>
Var<T> sparsity_loss(const Var<T>& p, double lambda) {
  if (!(lambda >= 0.0)) throw Error("sparsity_loss: lambda must be non-negative");
  return scale(mean(abs(sigmoid(p))), static_cast<T>(lambda));
}

template <typename T>
Var<T> model_attention_bias(const CaptionModel<T>& model) {
  const AttentionLayout layout{model.text_len(), model.video_tokens()};
  const auto& e = model.config().encoder;
  if (e.mode == MaskMode::kHeuristic) {
    const MaskGrid h = heuristic_mask(e.heuristic, e.heuristic_width, model.grid());
    return build_attention_bias(layout, model.mask_logits(), e.mode, &h);
  }
  return build_attention_bias(layout, model.mask_logits(), e.mode);
}

template <typename T>
Var<T> forward_mlm(const CaptionModel<T>& model, std::span<const std::int32_t> ids,
                   const Var<T>& video, std::size_t batch, const Var<T>& bias, MlmTrace<T>* trace) {
  const std::size_t n = model.text_len(), m = model.video_tokens(), s = n + m;
  const std::size_t d = model.config().encoder.hidden;
  if (batch == 0 || ids.size() != batch * n) {
    throw DimensionError("forward_mlm: " + std::to_string(ids.size()) + " token ids for batch " +
                         std::to_string(batch) + " of length N=" + std::to_string(n));
  }
  if (video.shape() != Shape{batch * m, d}) {
    throw DimensionError("forward_mlm: video tokens " + shape_str(video.shape()) + " but layout expects " +
                         shape_str({batch * m, d}));
  }
  if (bias.shape() != Shape{s, s}) {
    throw DimensionError("forward_mlm: bias " + shape_str(bias.shape()) + " for sequence " +
                         std::to_string(s));
  }
  for (const auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.vocab_size()) {
      throw DimensionError("forward_mlm: token id " + std::to_string(id) + " outside vocabulary");
    }
  }

  const Var<T> text = add_bias(add(embedding(model.get("text.word"), ids), repeat_rows(model.get("text.pos"), batch)),
                               model.get("type.text"));
  const Var<T> vid = add_bias(video, model.get("type.video"));
  std::vector<Var<T>> parts;
  parts.reserve(2 * batch);
  for (std::size_t b = 0; b < batch; ++b) {
    parts.push_back(slice(text, b * n, n, 0, d));
    parts.push_back(slice(vid, b * m, m, 0, d));
  }
  Var<T> x = concat_rows(parts);

  const auto& e = model.config().encoder;
  for (std::size_t l = 0; l < e.layers; ++l) {
    if (trace) trace->layer_inputs.push_back(x.value());
    x = detail::transformer_block(model, "enc.layer" + std::to_string(l), x, batch, s, e.heads, bias);
  }
  x = layer_norm(x, model.get("enc.ln.g"), model.get("enc.ln.b"), static_cast<T>(1e-5));
  std::vector<Var<T>> text_rows;
  text_rows.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) text_rows.push_back(slice(x, b * s, n, 0, d));
  const Var<T> h = batch == 1 ? text_rows.front() : concat_rows(text_rows);
  return detail::linear(h, model.get("head.w"), model.get("head.b"));
}

#define SPARSECAP_INSTANTIATE(T)                                                                  \
  template Var<T> build_attention_bias(const AttentionLayout&, const Var<T>&, MaskMode,         \
                                       const MaskGrid*);                                         \
  template Var<T> sparsity_loss(const Var<T>&, double);                                          \
  template Var<T> model_attention_bias(const CaptionModel<T>&);                                  \
  template Var<T> forward_mlm(const CaptionModel<T>&, std::span<const std::int32_t>,            \
                              const Var<T>&, std::size_t, const Var<T>&, MlmTrace<T>*);

SPARSECAP_INSTANTIATE(float)
SPARSECAP_INSTANTIATE(double)

#undef SPARSECAP_INSTANTIATE

}  // namespace sparsecap
