#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparsecap/data.hpp"

namespace sparsecap {

enum class MaskMode { kFull, kSoft, kBinary, kHeuristic };
enum class HeuristicKind { kSpatialWindow, kTemporalWindow };

const char* to_string(MaskMode m);
const char* to_string(HeuristicKind k);
MaskMode parse_mask_mode(std::string_view s);
HeuristicKind parse_heuristic_kind(std::string_view s);

// Video token grid. Tokens are flattened t-major, then row, then column.
struct GridDims {
  std::size_t t = 1, h = 1, w = 1;
  std::size_t tokens() const { return t * h * w; }
  std::size_t spatial() const { return h * w; }
  bool operator==(const GridDims&) const = default;
};

struct PatchConfig {
  std::size_t patch_t = 2;
  std::size_t patch_s = 32;
  std::size_t width = 32;  // encoder width d_v
  std::size_t depth = 1;
  std::size_t heads = 4;
};

struct EncoderConfig {
  std::size_t hidden = 64;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t ffn = 256;
  std::size_t text_len = 16;  // N
  MaskMode mode = MaskMode::kSoft;
  HeuristicKind heuristic = HeuristicKind::kTemporalWindow;
  std::size_t heuristic_width = 1;
  double mask_init = 3.0;  // initial pre-activation; sigmoid(3) ≈ 0.953
};

struct ModelConfig {
  std::size_t frames = 8;
  std::size_t height = 64;
  std::size_t width = 64;
  PatchConfig patch;
  EncoderConfig encoder;
  Vocabulary vocab;

  // Validates divisibility and head counts; errors name the offending axis.
  GridDims grid() const;
  void validate() const;
  GeneratorConfig generator() const;

  std::string to_text() const;
};

enum class TrainMode { kFull, kSoft, kBinaryFinetune, kHeuristic };
const char* to_string(TrainMode m);

struct TrainConfig {
  std::size_t steps = 3000;
  double lr = 1e-3;
  double mask_lr = 1e-2;
  double warmup = 0.10;
  std::size_t batch = 8;
  double lambda = 5.0;
  double mask_ratio = 0.15;
  bool mlm_include_eos = true;
  double weight_decay = 0.05;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::kSoft;
  std::size_t log_interval = 100;
  std::size_t eval_interval = 1000;
  std::size_t checkpoint_interval = 0;
  std::string init_checkpoint;
  bool init_mask_only = false;  // init_scope = all | mask-only

  // Dataset: a gen-data directory, or synthetic splits rendered on demand.
  std::string data;
  std::size_t train_clips = 2000;
  std::size_t val_clips = 200;
  std::uint64_t data_seed = 7;
  int min_speed = 1;
  int max_speed = 3;
  int radius = 6;

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// `key = value` lines, '#' comments, blank lines ignored. Duplicate keys and
// malformed lines raise ConfigError with the line number.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

// Unknown keys are rejected.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);
ModelConfig parse_model_config(std::string_view text);

}  // namespace sparsecap
