#pragma once

#include <vector>

#include "sparsecap/config.hpp"
#include "sparsecap/data.hpp"
#include "sparsecap/rng.hpp"

namespace testutil {

// Small enough for exhaustive checks: M = 2·2·2 = 8 video tokens, N = 6.
inline sparsecap::ModelConfig tiny_config() {
  using namespace sparsecap;
  ModelConfig c;
  c.frames = 4;
  c.height = 16;
  c.width = 16;
  c.patch.patch_t = 2;
  c.patch.patch_s = 8;
  c.patch.width = 8;
  c.patch.heads = 2;
  c.encoder.hidden = 16;
  c.encoder.layers = 2;
  c.encoder.heads = 2;
  c.encoder.ffn = 32;
  c.encoder.text_len = 6;
  c.vocab = build_vocab({"a red green square circle moves left right"}, 1);
  return c;
}

inline sparsecap::GeneratorConfig tiny_generator() {
  sparsecap::GeneratorConfig g = tiny_config().generator();
  g.radius = 2;
  g.max_speed = 1;
  return g;
}

inline sparsecap::VideoClip random_clip(const sparsecap::ModelConfig& c, std::uint64_t seed) {
  sparsecap::VideoClip v(c.frames, c.height, c.width);
  sparsecap::SplitMix64 g(seed);
  for (auto& p : v.pixels) p = static_cast<float>(g.uniform());
  return v;
}

inline std::vector<std::int32_t> random_ids(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  sparsecap::SplitMix64 g(seed);
  std::vector<std::int32_t> ids(n);
  for (auto& i : ids) i = static_cast<std::int32_t>(g.below(vocab));
  return ids;
}

}  // namespace testutil
