#include "sparsecap/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace sparsecap {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

template <typename I>
I parse_int(const std::string& key, const std::string& v) {
  I out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a real number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

#define SZ(field) [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_int<std::size_t>(k, v); }
#define INT(field) [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_int<int>(k, v); }
#define U64(field) [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_int<std::uint64_t>(k, v); }
#define REAL(field) [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_real(k, v); }

const std::map<std::string, Setter, std::less<>>& model_keys() {
  static const std::map<std::string, Setter, std::less<>> keys = {
      {"frames", SZ(model.frames)},
      {"height", SZ(model.height)},
      {"width", SZ(model.width)},
      {"patch_t", SZ(model.patch.patch_t)},
      {"patch_s", SZ(model.patch.patch_s)},
      {"video_width", SZ(model.patch.width)},
      {"video_depth", SZ(model.patch.depth)},
      {"video_heads", SZ(model.patch.heads)},
      {"hidden", SZ(model.encoder.hidden)},
      {"layers", SZ(model.encoder.layers)},
      {"heads", SZ(model.encoder.heads)},
      {"ffn", SZ(model.encoder.ffn)},
      {"text_len", SZ(model.encoder.text_len)},
      {"mask_mode",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.model.encoder.mode = parse_mask_mode(v);
       }},
      {"heuristic",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.model.encoder.heuristic = parse_heuristic_kind(v);
       }},
      {"heuristic_width", SZ(model.encoder.heuristic_width)},
      {"mask_init", REAL(model.encoder.mask_init)},
      {"vocab",
       [](RunConfig& c, const std::string&, const std::string& v) {
         std::istringstream is(v);
         std::vector<std::string> toks;
         for (std::string t; is >> t;) toks.push_back(t);
         c.model.vocab = Vocabulary(std::move(toks));
       }},
  };
  return keys;
}

const std::map<std::string, Setter, std::less<>>& train_keys() {
  static const std::map<std::string, Setter, std::less<>> keys = {
      {"steps", SZ(train.steps)},
      {"lr", REAL(train.lr)},
      {"mask_lr", REAL(train.mask_lr)},
      {"warmup", REAL(train.warmup)},
      {"batch", SZ(train.batch)},
      {"lambda", REAL(train.lambda)},
      {"mask_ratio", REAL(train.mask_ratio)},
      {"mlm_include_eos",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.mlm_include_eos = parse_bool(k, v);
       }},
      {"weight_decay", REAL(train.weight_decay)},
      {"clip_norm", REAL(train.clip_norm)},
      {"seed", U64(train.seed)},
      {"mode",
       [](RunConfig& c, const std::string&, const std::string& v) {
         if (v == "full") c.train.mode = TrainMode::kFull;
         else if (v == "soft") c.train.mode = TrainMode::kSoft;
         else if (v == "binary-finetune") c.train.mode = TrainMode::kBinaryFinetune;
         else if (v == "heuristic") c.train.mode = TrainMode::kHeuristic;
         else throw ConfigError("unknown training mode '" + v + "'");
       }},
      {"log_interval", SZ(train.log_interval)},
      {"eval_interval", SZ(train.eval_interval)},
      {"checkpoint_interval", SZ(train.checkpoint_interval)},
      {"init_checkpoint",
       [](RunConfig& c, const std::string&, const std::string& v) { c.train.init_checkpoint = v; }},
      {"init_scope",
       [](RunConfig& c, const std::string&, const std::string& v) {
         if (v == "all") c.train.init_mask_only = false;
         else if (v == "mask-only") c.train.init_mask_only = true;
         else throw ConfigError("init_scope must be 'all' or 'mask-only', got '" + v + "'");
       }},
      {"data", [](RunConfig& c, const std::string&, const std::string& v) { c.train.data = v; }},
      {"train_clips", SZ(train.train_clips)},
      {"val_clips", SZ(train.val_clips)},
      {"data_seed", U64(train.data_seed)},
      {"min_speed", INT(train.min_speed)},
      {"max_speed", INT(train.max_speed)},
      {"radius", INT(train.radius)},
  };
  return keys;
}

#undef SZ
#undef INT
#undef U64
#undef REAL

}  // namespace

const char* to_string(MaskMode m) {
  switch (m) {
    case MaskMode::kFull: return "full";
    case MaskMode::kSoft: return "soft";
    case MaskMode::kBinary: return "binary";
    case MaskMode::kHeuristic: return "heuristic";
  }
  return "?";
}

const char* to_string(HeuristicKind k) {
  return k == HeuristicKind::kSpatialWindow ? "spatial-window" : "temporal-window";
}

const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kFull: return "full";
    case TrainMode::kSoft: return "soft";
    case TrainMode::kBinaryFinetune: return "binary-finetune";
    case TrainMode::kHeuristic: return "heuristic";
  }
  return "?";
}

MaskMode parse_mask_mode(std::string_view s) {
  if (s == "full") return MaskMode::kFull;
  if (s == "soft") return MaskMode::kSoft;
  if (s == "binary") return MaskMode::kBinary;
  if (s == "heuristic") return MaskMode::kHeuristic;
  throw ConfigError("unknown mask mode '" + std::string(s) + "'");
}

HeuristicKind parse_heuristic_kind(std::string_view s) {
  if (s == "spatial-window") return HeuristicKind::kSpatialWindow;
  if (s == "temporal-window") return HeuristicKind::kTemporalWindow;
  throw ConfigError("unknown heuristic kind '" + std::string(s) + "'");
}

GridDims ModelConfig::grid() const {
  if (patch.patch_t == 0 || patch.patch_s == 0) throw ConfigError("patch sizes must be positive");
  if (frames == 0 || frames % patch.patch_t != 0) {
    throw ConfigError("axis T: " + std::to_string(frames) + " frames not divisible by temporal patch " +
                      std::to_string(patch.patch_t));
  }
  if (height == 0 || height % patch.patch_s != 0) {
    throw ConfigError("axis H: height " + std::to_string(height) +
                      " not divisible by spatial patch " + std::to_string(patch.patch_s));
  }
  if (width == 0 || width % patch.patch_s != 0) {
    throw ConfigError("axis W: width " + std::to_string(width) + " not divisible by spatial patch " +
                      std::to_string(patch.patch_s));
  }
  return {frames / patch.patch_t, height / patch.patch_s, width / patch.patch_s};
}

void ModelConfig::validate() const {
  grid();
  if (patch.width == 0 || patch.heads == 0 || patch.width % patch.heads != 0) {
    throw ConfigError("video_width " + std::to_string(patch.width) + " not divisible by video_heads " +
                      std::to_string(patch.heads));
  }
  const auto& e = encoder;
  if (e.hidden == 0 || e.heads == 0 || e.hidden % e.heads != 0) {
    throw ConfigError("hidden " + std::to_string(e.hidden) + " not divisible by heads " +
                      std::to_string(e.heads));
  }
  if (e.layers == 0) throw ConfigError("layers must be positive");
  if (e.ffn == 0) throw ConfigError("ffn must be positive");
  if (e.text_len < 3) throw ConfigError("text_len must be at least 3");
  if (e.heuristic_width == 0) throw ConfigError("heuristic_width must be positive");
}

GeneratorConfig ModelConfig::generator() const {
  GeneratorConfig g;
  g.frames = frames;
  g.height = height;
  g.width = width;
  g.patch_t = patch.patch_t;
  g.patch_s = patch.patch_s;
  return g;
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "frames = " << frames << "\n"
     << "height = " << height << "\n"
     << "width = " << width << "\n"
     << "patch_t = " << patch.patch_t << "\n"
     << "patch_s = " << patch.patch_s << "\n"
     << "video_width = " << patch.width << "\n"
     << "video_depth = " << patch.depth << "\n"
     << "video_heads = " << patch.heads << "\n"
     << "hidden = " << encoder.hidden << "\n"
     << "layers = " << encoder.layers << "\n"
     << "heads = " << encoder.heads << "\n"
     << "ffn = " << encoder.ffn << "\n"
     << "text_len = " << encoder.text_len << "\n"
     << "mask_mode = " << to_string(encoder.mode) << "\n"
     << "heuristic = " << to_string(encoder.heuristic) << "\n"
     << "heuristic_width = " << encoder.heuristic_width << "\n"
     << "mask_init = " << fmt_real(encoder.mask_init) << "\n"
     << "vocab =";
  for (const auto& t : vocab.tokens()) os << ' ' << t;
  os << "\n";
  return os.str();
}

void TrainConfig::validate() const {
  if (steps == 0) throw ConfigError("steps must be positive (no-op training rejected)");
  if (!(warmup > 0.0 && warmup < 1.0)) throw ConfigError("warmup fraction must lie in (0, 1)");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(mask_lr >= 0.0)) throw ConfigError("mask_lr must be non-negative");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) throw ConfigError("mask_ratio must lie in [0, 1]");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
  if (log_interval == 0) throw ConfigError("log_interval must be positive");
  if (mode == TrainMode::kBinaryFinetune && init_checkpoint.empty()) {
    throw ConfigError("binary-finetune needs init_checkpoint");
  }
  if (mode == TrainMode::kBinaryFinetune && init_mask_only) {
    throw ConfigError("binary-finetune restores the entire model (init_scope = all)");
  }
  if (data.empty() && (train_clips == 0 || val_clips == 0)) {
    throw ConfigError("synthetic splits need positive train_clips and val_clips");
  }
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string, std::less<>> seen;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!seen.insert(key).second) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  for (const auto& [k, v] : parse_key_values(text)) {
    if (auto it = model_keys().find(k); it != model_keys().end()) {
      it->second(cfg, k, v);
    } else if (auto jt = train_keys().find(k); jt != train_keys().end()) {
      jt->second(cfg, k, v);
    } else {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  return cfg;
}

ModelConfig parse_model_config(std::string_view text) {
  RunConfig cfg;
  for (const auto& [k, v] : parse_key_values(text)) {
    auto it = model_keys().find(k);
    if (it == model_keys().end()) throw ConfigError("unknown model config key '" + k + "'");
    it->second(cfg, k, v);
  }
  return cfg.model;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace sparsecap
