#pragma once

#include <vector>

#include "sparsecap/data.hpp"
#include "sparsecap/model.hpp"

namespace sparsecap {

// Token count for a clip shape; errors name the axis that fails to divide.
GridDims token_grid(std::size_t frames, std::size_t height, std::size_t width, const PatchConfig& p);

// Non-overlapping p_t×p_s×p_s×3 blocks flattened to rows [M × p_t·p_s²·3].
// Rows follow the t-major token order; within a row the order is
// (frame, y, x, channel).
template <typename T>
Tensor<T> raw_patches(const VideoClip& clip, const ModelConfig& cfg);

// Projected patches plus learned per-position embeddings, [B·M × d_v].
template <typename T>
Var<T> patchify(const CaptionModel<T>& model, const std::vector<const VideoClip*>& clips);

// Video tokens in the multimodal width, [B·M × d].
template <typename T>
Var<T> encode_video(const CaptionModel<T>& model, const std::vector<const VideoClip*>& clips);

template <typename T>
Var<T> encode_video(const CaptionModel<T>& model, const VideoClip& clip) {
  return encode_video(model, std::vector<const VideoClip*>{&clip});
}

}  // namespace sparsecap
