#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsecap/data.hpp"
#include "sparsecap/metrics.hpp"
#include "sparsecap/model.hpp"

namespace sparsecap {

struct DecodeConfig {
  // Generated positions, 1..N-1 (position 0 holds [BOS]); 0 means N-1.
  std::size_t max_len = 0;
  std::int32_t end_token = kEos;
};

struct DecodeOutput {
  std::vector<std::int32_t> tokens;  // generated ids, [EOS] included when emitted
  std::size_t steps = 0;
};

// Greedy generation for `batch` clips whose video tokens [B·M × d] are given.
// At step t position t holds [MASK], later positions [PAD]; the argmax at t
// (ties to the lowest id) replaces it.
template <typename T>
std::vector<DecodeOutput> greedy_decode_tokens(const CaptionModel<T>& model, const Var<T>& video,
                                               std::size_t batch, const DecodeConfig& cfg);

template <typename T>
std::vector<std::string> greedy_decode(const CaptionModel<T>& model,
                                       const std::vector<const VideoClip*>& clips,
                                       const DecodeConfig& cfg);

template <typename T>
std::string greedy_decode(const CaptionModel<T>& model, const VideoClip& clip, const DecodeConfig& cfg) {
  return greedy_decode(model, std::vector<const VideoClip*>{&clip}, cfg).front();
}

// Captions for every clip of a source, decoded in chunks of `chunk` clips.
template <typename T>
std::vector<std::string> decode_source(const CaptionModel<T>& model, const ClipSource& source,
                                       const DecodeConfig& cfg, std::size_t chunk = 32);

// Validation CIDEr-D of decoded captions against the source captions.
template <typename T>
double validation_cider(const CaptionModel<T>& model, const ClipSource& source, const DecodeConfig& cfg);

}  // namespace sparsecap
