#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sparsecap/mask_tools.hpp"
#include "sparsecap/model.hpp"

namespace sparsecap {

// Region map over the joint sequence: text positions 0..N-1 first, then
// video positions N..N+M-1.
struct AttentionLayout {
  std::size_t n = 0;  // text length
  std::size_t m = 0;  // video tokens

  std::size_t size() const { return n + m; }
  bool is_text(std::size_t i) const { return i < n; }
};

// (N+M)×(N+M) additive bias. Structural entries are 0 (allowed) or -kBlocked;
// the video-video block depends on `mode`:
//   full: 0; soft: ln(sigmoid(P) + 1e-8), differentiable in P;
//   binary: 0 where sigmoid(P) >= 0.5 else -kBlocked, and a video row left
//   with nothing open keeps its own diagonal;
//   heuristic: 0 where `fixed` is 1, else -kBlocked.
template <typename T>
Var<T> build_attention_bias(const AttentionLayout& layout, const Var<T>& p, MaskMode mode,
                            const MaskGrid* fixed = nullptr);

// lambda · mean |sigmoid(P)|.
template <typename T>
Var<T> sparsity_loss(const Var<T>& p, double lambda);

// Bias for the model's configured mode (heuristic masks come from config).
template <typename T>
Var<T> model_attention_bias(const CaptionModel<T>& model);

template <typename T>
struct MlmTrace {
  // Joint sequence [B·(N+M) × d] entering each layer.
  std::vector<Tensor<T>> layer_inputs;
};

// Logits [B·N × |V|] for `batch` captions (ids flattened, B·N) against video
// tokens [B·M × d].
template <typename T>
Var<T> forward_mlm(const CaptionModel<T>& model, std::span<const std::int32_t> ids,
                   const Var<T>& video, std::size_t batch, const Var<T>& bias,
                   MlmTrace<T>* trace = nullptr);

template <typename T>
Var<T> forward_mlm(const CaptionModel<T>& model, std::span<const std::int32_t> ids,
                   const Var<T>& video, std::size_t batch, MlmTrace<T>* trace = nullptr) {
  return forward_mlm(model, ids, video, batch, model_attention_bias(model), trace);
}

}  // namespace sparsecap
