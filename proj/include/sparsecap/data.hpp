#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sparsecap/errors.hpp"

namespace sparsecap {

// Reserved ids; every vocabulary starts with these five tokens in this order.
enum SpecialToken : std::int32_t { kPad = 0, kMask = 1, kBos = 2, kEos = 3, kUnk = 4 };
inline constexpr std::int32_t kNumSpecials = 5;
inline constexpr const char* kSpecialNames[kNumSpecials] = {"[PAD]", "[MASK]", "[BOS]", "[EOS]",
                                                            "[UNK]"};

inline bool is_special(std::int32_t id) { return id >= 0 && id < kNumSpecials; }

class Vocabulary {
 public:
  Vocabulary();
  // `tokens` must begin with the five specials in their reserved order.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  // Unknown words map to [UNK].
  std::int32_t lookup(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& decode(std::int32_t id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Lowercased whitespace tokens.
std::vector<std::string> tokenize(std::string_view text);

// Words with frequency >= min_freq, ordered by (-frequency, lexicographic)
// after the specials.
Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq);

// Layout [BOS] w... [EOS] [PAD]...; words past n-2 are dropped.
struct CaptionTokens {
  std::vector<std::int32_t> ids;
  std::size_t length = 0;  // real tokens including [BOS] and [EOS]
};

CaptionTokens encode_caption(std::string_view text, const Vocabulary& vocab, std::size_t n);

// Words of an id sequence with [PAD]/[MASK]/[BOS]/[EOS] stripped; [UNK] is
// rendered literally. Stops at the first [EOS].
std::string decode_ids(const std::vector<std::int32_t>& ids, const Vocabulary& vocab);

enum class ShapeKind : std::uint8_t { kSquare, kCircle, kTriangle };
enum class Color : std::uint8_t { kRed, kGreen, kBlue, kYellow };
enum class Direction : std::uint8_t { kLeft, kRight, kUp, kDown };

const char* to_string(ShapeKind s);
const char* to_string(Color c);
const char* to_string(Direction d);
Direction opposite(Direction d);

struct SceneSpec {
  ShapeKind shape = ShapeKind::kSquare;
  Color color = Color::kRed;
  Direction direction = Direction::kLeft;
  int speed = 1;   // pixels per frame
  int start_x = 0;  // shape centre at frame 0
  int start_y = 0;

  bool operator==(const SceneSpec&) const = default;
};

std::string caption_for(const SceneSpec& spec);

struct GeneratorConfig {
  std::size_t frames = 8;
  std::size_t height = 64;
  std::size_t width = 64;
  // Divisibility requirements enforced on generated clips.
  std::size_t patch_t = 2;
  std::size_t patch_s = 32;
  int min_speed = 1;
  int max_speed = 3;
  int radius = 6;

  void validate() const;
};

// T×H×W×3 frames, values in [0,1], stored in training precision.
struct VideoClip {
  std::size_t frames = 0, height = 0, width = 0;
  std::vector<float> pixels;

  VideoClip() = default;
  VideoClip(std::size_t t, std::size_t h, std::size_t w)
      : frames(t), height(h), width(w), pixels(t * h * w * 3, 0.0f) {}

  std::size_t frame_size() const { return height * width * 3; }
  float& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) {
    return pixels[((t * height + y) * width + x) * 3 + c];
  }
  float at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[((t * height + y) * width + x) * 3 + c];
  }
  bool operator==(const VideoClip&) const = default;
};

// Shape centre at frame t, clamped so the shape stays inside the frame.
std::pair<int, int> position_at(const SceneSpec& spec, const GeneratorConfig& cfg, std::size_t t);

VideoClip render_clip(const SceneSpec& spec, const GeneratorConfig& cfg);

struct GeneratedClip {
  VideoClip clip;
  SceneSpec spec;
  std::string caption;
};

// Scene drawn from a SplitMix64 stream seeded by `seed`; generate_clip renders it.
SceneSpec draw_scene(std::uint64_t seed, const GeneratorConfig& cfg);
GeneratedClip generate_clip(std::uint64_t seed, const GeneratorConfig& cfg);

VideoClip reverse_frames(const VideoClip& clip);
// Frame order permuted by a seeded SplitMix64 Fisher-Yates shuffle.
VideoClip shuffle_frames(const VideoClip& clip, std::uint64_t seed);

struct MlmSample {
  CaptionTokens corrupted;
  std::vector<std::uint8_t> supervised;
  std::vector<std::int32_t> targets;  // original ids at supervised positions, [PAD] elsewhere
};

// Replaces exactly round(ratio * k) of the k non-special word positions with
// [MASK]. With include_eos the [EOS] position joins the candidate set, which
// is how a model learns to stop.
MlmSample apply_mlm_mask(const CaptionTokens& tokens, double ratio, std::uint64_t seed,
                         bool include_eos = false);

// --- corpora ---------------------------------------------------------------

class ClipSource {
 public:
  virtual ~ClipSource() = default;
  virtual std::size_t size() const = 0;
  virtual VideoClip clip(std::size_t i) const = 0;
  virtual const std::string& caption(std::size_t i) const = 0;
};

// Clips rendered on demand from per-clip seeds; same content gen-data writes.
class SyntheticSplit : public ClipSource {
 public:
  SyntheticSplit(std::uint64_t split_seed, std::size_t count, GeneratorConfig cfg);

  std::size_t size() const override { return specs_.size(); }
  VideoClip clip(std::size_t i) const override;
  const std::string& caption(std::size_t i) const override { return captions_[i]; }
  const SceneSpec& spec(std::size_t i) const { return specs_[i]; }
  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  std::vector<SceneSpec> specs_;
  std::vector<std::string> captions_;
};

class MemorySplit : public ClipSource {
 public:
  MemorySplit(std::vector<VideoClip> clips, std::vector<std::string> captions);

  std::size_t size() const override { return clips_.size(); }
  VideoClip clip(std::size_t i) const override { return clips_[i]; }
  const std::string& caption(std::size_t i) const override { return captions_[i]; }

 private:
  std::vector<VideoClip> clips_;
  std::vector<std::string> captions_;
};

// Seed of split `name` ("train", "val") under a dataset seed.
std::uint64_t split_seed(std::uint64_t dataset_seed, std::string_view name);

// On-disk split: clips.bin, captions.txt, vocab.txt.
void write_split(const std::filesystem::path& dir, const ClipSource& source,
                 const Vocabulary& vocab);
std::vector<VideoClip> read_clips(const std::filesystem::path& file);
std::vector<std::string> read_lines(const std::filesystem::path& file);
Vocabulary read_vocab(const std::filesystem::path& file);
std::unique_ptr<MemorySplit> read_split(const std::filesystem::path& dir);

}  // namespace sparsecap
