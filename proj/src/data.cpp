#include "sparsecap/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "sparsecap/rng.hpp"

namespace sparsecap {

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>(kSpecialNames, kSpecialNames + kNumSpecials)) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < static_cast<std::size_t>(kNumSpecials)) {
    throw FormatError("vocabulary has fewer than the five reserved tokens");
  }
  for (std::int32_t i = 0; i < kNumSpecials; ++i) {
    if (tokens_[i] != kSpecialNames[i]) {
      throw FormatError("vocabulary id " + std::to_string(i) + " must be " + kSpecialNames[i] +
                        ", found '" + tokens_[i] + "'");
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second) {
      throw FormatError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

std::int32_t Vocabulary::lookup(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return index_.count(std::string(word)) != 0;
}

const std::string& Vocabulary::decode(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DimensionError("token id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq) {
  if (corpus.empty()) throw Error("build_vocab: empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& line : corpus)
    for (auto& w : tokenize(line)) ++freq[w];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [w, f] : freq) {
    // Words that collide with a reserved name would break the id contract.
    const bool reserved = std::find(kSpecialNames, kSpecialNames + kNumSpecials, w) !=
                          kSpecialNames + kNumSpecials;
    if (f >= min_freq && !reserved) kept.emplace_back(w, f);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens(kSpecialNames, kSpecialNames + kNumSpecials);
  for (auto& [w, f] : kept) tokens.push_back(w);
  return Vocabulary(std::move(tokens));
}

CaptionTokens encode_caption(std::string_view text, const Vocabulary& vocab, std::size_t n) {
  if (n < 3) throw Error("encode_caption: length N must be at least 3, got " + std::to_string(n));
  const auto words = tokenize(text);
  const std::size_t kept = std::min(words.size(), n - 2);
  CaptionTokens out;
  out.ids.assign(n, kPad);
  out.ids[0] = kBos;
  for (std::size_t i = 0; i < kept; ++i) out.ids[i + 1] = vocab.lookup(words[i]);
  out.ids[kept + 1] = kEos;
  out.length = kept + 2;
  return out;
}

std::string decode_ids(const std::vector<std::int32_t>& ids, const Vocabulary& vocab) {
  std::string out;
  for (const auto id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kMask || id == kBos) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.decode(id);
  }
  return out;
}

const char* to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "?";
}

const char* to_string(Color c) {
  switch (c) {
    case Color::kRed: return "red";
    case Color::kGreen: return "green";
    case Color::kBlue: return "blue";
    case Color::kYellow: return "yellow";
  }
  return "?";
}

const char* to_string(Direction d) {
  switch (d) {
    case Direction::kLeft: return "left";
    case Direction::kRight: return "right";
    case Direction::kUp: return "up";
    case Direction::kDown: return "down";
  }
  return "?";
}

Direction opposite(Direction d) {
  switch (d) {
    case Direction::kLeft: return Direction::kRight;
    case Direction::kRight: return Direction::kLeft;
    case Direction::kUp: return Direction::kDown;
    case Direction::kDown: return Direction::kUp;
  }
  return d;
}

std::string caption_for(const SceneSpec& spec) {
  return std::string("a ") + to_string(spec.color) + " " + to_string(spec.shape) + " moves " +
         to_string(spec.direction);
}

void GeneratorConfig::validate() const {
  if (frames < 2 || frames % 2 != 0) {
    throw ConfigError("clip frame count must be even and >= 2, got " + std::to_string(frames));
  }
  if (patch_t == 0 || frames % patch_t != 0) {
    throw ConfigError("frames (" + std::to_string(frames) + ") not divisible by temporal patch " +
                      std::to_string(patch_t));
  }
  if (patch_s == 0 || height % patch_s != 0) {
    throw ConfigError("height (" + std::to_string(height) + ") not divisible by spatial patch " +
                      std::to_string(patch_s));
  }
  if (width % patch_s != 0) {
    throw ConfigError("width (" + std::to_string(width) + ") not divisible by spatial patch " +
                      std::to_string(patch_s));
  }
  if (radius < 1 || 2 * radius + 1 > static_cast<int>(std::min(height, width))) {
    throw ConfigError("shape radius " + std::to_string(radius) + " does not fit the frame");
  }
  if (min_speed < 0 || max_speed < min_speed) throw ConfigError("invalid speed range");
}

namespace {

std::pair<int, int> step_of(Direction d) {
  switch (d) {
    case Direction::kLeft: return {-1, 0};
    case Direction::kRight: return {1, 0};
    case Direction::kUp: return {0, -1};
    case Direction::kDown: return {0, 1};
  }
  return {0, 0};
}

bool covers(ShapeKind shape, int dx, int dy, int r) {
  switch (shape) {
    case ShapeKind::kSquare: return std::abs(dx) <= r && std::abs(dy) <= r;
    case ShapeKind::kCircle: return dx * dx + dy * dy <= r * r;
    case ShapeKind::kTriangle:
      // Apex up; the half-width grows by one pixel every two rows.
      return dy >= -r && dy <= r && 2 * std::abs(dx) <= dy + r;
  }
  return false;
}

std::array<float, 3> rgb(Color c) {
  switch (c) {
    case Color::kRed: return {1.0f, 0.0f, 0.0f};
    case Color::kGreen: return {0.0f, 1.0f, 0.0f};
    case Color::kBlue: return {0.0f, 0.0f, 1.0f};
    case Color::kYellow: return {1.0f, 1.0f, 0.0f};
  }
  return {0.0f, 0.0f, 0.0f};
}

}  // namespace

std::pair<int, int> position_at(const SceneSpec& spec, const GeneratorConfig& cfg, std::size_t t) {
  const auto [sx, sy] = step_of(spec.direction);
  const int r = cfg.radius;
  const int x = spec.start_x + sx * spec.speed * static_cast<int>(t);
  const int y = spec.start_y + sy * spec.speed * static_cast<int>(t);
  return {std::clamp(x, r, static_cast<int>(cfg.width) - 1 - r),
          std::clamp(y, r, static_cast<int>(cfg.height) - 1 - r)};
}

VideoClip render_clip(const SceneSpec& spec, const GeneratorConfig& cfg) {
  cfg.validate();
  VideoClip clip(cfg.frames, cfg.height, cfg.width);
  const auto color = rgb(spec.color);
  const int r = cfg.radius;
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    const auto [cx, cy] = position_at(spec, cfg, t);
    for (int y = cy - r; y <= cy + r; ++y) {
      for (int x = cx - r; x <= cx + r; ++x) {
        if (!covers(spec.shape, x - cx, y - cy, r)) continue;
        for (std::size_t c = 0; c < 3; ++c) clip.at(t, y, x, c) = color[c];
      }
    }
  }
  return clip;
}

SceneSpec draw_scene(std::uint64_t seed, const GeneratorConfig& cfg) {
  cfg.validate();
  SplitMix64 rng(seed);
  SceneSpec s;
  s.shape = static_cast<ShapeKind>(rng.below(3));
  s.color = static_cast<Color>(rng.below(4));
  s.direction = static_cast<Direction>(rng.below(4));
  s.speed = cfg.min_speed + static_cast<int>(rng.below(cfg.max_speed - cfg.min_speed + 1));
  // Start so the whole trajectory fits when it can; otherwise clamping holds
  // the shape at the border for the remaining frames.
  const int r = cfg.radius;
  const int travel = s.speed * static_cast<int>(cfg.frames - 1);
  auto pick = [&](int extent, int dir) {
    int lo = r, hi = extent - 1 - r;
    if (dir < 0) lo = std::min(hi, lo + travel);
    if (dir > 0) hi = std::max(lo, hi - travel);
    return lo + static_cast<int>(rng.below(hi - lo + 1));
  };
  const auto [sx, sy] = step_of(s.direction);
  s.start_x = pick(static_cast<int>(cfg.width), sx);
  s.start_y = pick(static_cast<int>(cfg.height), sy);
  return s;
}

GeneratedClip generate_clip(std::uint64_t seed, const GeneratorConfig& cfg) {
  GeneratedClip out;
  out.spec = draw_scene(seed, cfg);
  out.clip = render_clip(out.spec, cfg);
  out.caption = caption_for(out.spec);
  return out;
}

VideoClip reverse_frames(const VideoClip& clip) {
  VideoClip out = clip;
  const std::size_t fs = clip.frame_size();
  for (std::size_t t = 0; t < clip.frames; ++t)
    std::copy_n(clip.pixels.begin() + (clip.frames - 1 - t) * fs, fs, out.pixels.begin() + t * fs);
  return out;
}

VideoClip shuffle_frames(const VideoClip& clip, std::uint64_t seed) {
  std::vector<std::size_t> order(clip.frames);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  VideoClip out = clip;
  const std::size_t fs = clip.frame_size();
  for (std::size_t t = 0; t < clip.frames; ++t)
    std::copy_n(clip.pixels.begin() + order[t] * fs, fs, out.pixels.begin() + t * fs);
  return out;
}

MlmSample apply_mlm_mask(const CaptionTokens& tokens, double ratio, std::uint64_t seed,
                         bool include_eos) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw Error("apply_mlm_mask: ratio must lie in [0, 1]");
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < tokens.ids.size(); ++i) {
    const auto id = tokens.ids[i];
    if (!is_special(id) || (include_eos && id == kEos)) candidates.push_back(i);
  }
  const auto chosen = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(candidates.size())));
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < chosen; ++i)
    std::swap(candidates[i], candidates[i + rng.below(candidates.size() - i)]);

  MlmSample out;
  out.corrupted = tokens;
  out.supervised.assign(tokens.ids.size(), 0);
  out.targets.assign(tokens.ids.size(), kPad);
  for (std::size_t i = 0; i < chosen; ++i) {
    const auto pos = candidates[i];
    out.supervised[pos] = 1;
    out.targets[pos] = tokens.ids[pos];
    out.corrupted.ids[pos] = kMask;
  }
  return out;
}

SyntheticSplit::SyntheticSplit(std::uint64_t split_seed, std::size_t count, GeneratorConfig cfg)
    : cfg_(cfg) {
  cfg_.validate();
  specs_.reserve(count);
  captions_.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    specs_.push_back(draw_scene(mix_seed(split_seed, i), cfg_));
    captions_.push_back(caption_for(specs_.back()));
  }
}

VideoClip SyntheticSplit::clip(std::size_t i) const { return render_clip(specs_.at(i), cfg_); }

MemorySplit::MemorySplit(std::vector<VideoClip> clips, std::vector<std::string> captions)
    : clips_(std::move(clips)), captions_(std::move(captions)) {
  if (clips_.size() != captions_.size()) {
    throw FormatError("split has " + std::to_string(clips_.size()) + " clips but " +
                      std::to_string(captions_.size()) + " captions");
  }
}

std::uint64_t split_seed(std::uint64_t dataset_seed, std::string_view name) {
  std::uint64_t salt = 1469598103934665603ULL;  // FNV-1a over the split name
  for (const char c : name) salt = (salt ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return mix_seed(dataset_seed, salt);
}

void write_split(const std::filesystem::path& dir, const ClipSource& source,
                 const Vocabulary& vocab) {
  std::filesystem::create_directories(dir);
  {
    binio::Writer w(dir / "clips.bin");
    for (std::size_t i = 0; i < source.size(); ++i) {
      const VideoClip clip = source.clip(i);
      w.u32(static_cast<std::uint32_t>(clip.frames));
      w.u32(static_cast<std::uint32_t>(clip.height));
      w.u32(static_cast<std::uint32_t>(clip.width));
      w.f32s(clip.pixels);
    }
    w.close();
  }
  std::ofstream captions(dir / "captions.txt", std::ios::binary);
  for (std::size_t i = 0; i < source.size(); ++i) captions << source.caption(i) << '\n';
  std::ofstream vocab_out(dir / "vocab.txt", std::ios::binary);
  for (const auto& t : vocab.tokens()) vocab_out << t << '\n';
  if (!captions || !vocab_out) throw IoError("failed writing split files under " + dir.string());
}

std::vector<VideoClip> read_clips(const std::filesystem::path& file) {
  binio::Reader r(file);
  std::vector<VideoClip> clips;
  while (!r.at_end()) {
    const std::size_t t = r.u32(), h = r.u32(), w = r.u32();
    if (t == 0 || h == 0 || w == 0) {
      throw FormatError(file.string() + ": clip " + std::to_string(clips.size()) +
                        " has a zero dimension");
    }
    VideoClip clip(t, h, w);
    r.f32s(clip.pixels);
    clips.push_back(std::move(clip));
  }
  return clips;
}

std::vector<std::string> read_lines(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

Vocabulary read_vocab(const std::filesystem::path& file) { return Vocabulary(read_lines(file)); }

std::unique_ptr<MemorySplit> read_split(const std::filesystem::path& dir) {
  return std::make_unique<MemorySplit>(read_clips(dir / "clips.bin"),
                                       read_lines(dir / "captions.txt"));
}

}  // namespace sparsecap
