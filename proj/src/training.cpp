#include "sparsecap/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "sparsecap/checkpoint.hpp"
#include "sparsecap/multimodal.hpp"
#include "sparsecap/rng.hpp"
#include "sparsecap/video_encoder.hpp"

namespace sparsecap {

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (cfg.steps == 0) throw ConfigError("lr_at: total steps must be positive");
  if (step > cfg.steps) {
    throw Error("lr_at: step " + std::to_string(step) + " beyond total " + std::to_string(cfg.steps));
  }
  const double total = static_cast<double>(cfg.steps);
  const double warm = cfg.warmup * total;
  const double s = static_cast<double>(step);
  if (s <= warm) return warm > 0.0 ? cfg.lr * s / warm : cfg.lr;
  return cfg.lr * (total - s) / (total - warm);
}

AdamW::AdamW(double weight_decay, double beta1, double beta2, double eps)
    : wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

void AdamW::step(CaptionModel<float>& model, double lr, double mask_lr) {
  auto& params = model.params();
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.var.requires_grad()) continue;
    const bool is_mask = p.name == kMaskParam;
    const double rate = is_mask ? mask_lr : lr;
    const bool decay = !is_mask && p.var.shape().size() >= 2;
    auto& w = p.var.mutable_value().data;
    const auto g = p.var.grad();
    if (m_[i].empty()) {
      m_[i].assign(w.size(), 0.0f);
      v_[i].assign(w.size(), 0.0f);
    }
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      const double m = b1_ * m_[i][k] + (1.0 - b1_) * gk;
      const double v = b2_ * v_[i][k] + (1.0 - b2_) * gk * gk;
      m_[i][k] = static_cast<float>(m);
      v_[i][k] = static_cast<float>(v);
      double x = w[k];
      if (decay) x -= rate * wd_ * x;
      x -= rate * (m / c1) / (std::sqrt(v / c2) + eps_);
      w[k] = static_cast<float>(x);
    }
  }
}

std::vector<const VideoClip*> TrainBatch::clip_ptrs() const {
  std::vector<const VideoClip*> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(&c);
  return out;
}

TrainBatch make_batch(const ClipSource& source, const std::vector<std::size_t>& indices,
                      const Vocabulary& vocab, std::size_t n, double mask_ratio, bool include_eos,
                      std::uint64_t seed) {
  TrainBatch b;
  b.clips.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    b.clips.push_back(source.clip(i));
    const CaptionTokens tok = encode_caption(source.caption(i), vocab, n);
    const MlmSample s = apply_mlm_mask(tok, mask_ratio, mix_seed(seed, k), include_eos);
    b.ids.insert(b.ids.end(), s.corrupted.ids.begin(), s.corrupted.ids.end());
    b.targets.insert(b.targets.end(), s.targets.begin(), s.targets.end());
    b.supervised.insert(b.supervised.end(), s.supervised.begin(), s.supervised.end());
  }
  return b;
}

StepLosses train_step(CaptionModel<float>& model, AdamW& opt, const TrainBatch& batch,
                      const TrainConfig& cfg, std::size_t step) {
  if (batch.size() == 0) throw Error("train_step: empty batch");
  const bool soft = model.config().encoder.mode == MaskMode::kSoft && model.mask_logits().requires_grad();
  StepLosses out;
  model.zero_grad();
  try {
    const Var<float> video = encode_video(model, batch.clip_ptrs());
    const Var<float> logits = forward_mlm(model, batch.ids, video, batch.size());
    const Var<float> l_mlm = cross_entropy_mlm(logits, std::span<const std::int32_t>(batch.targets),
                                               std::span<const std::uint8_t>(batch.supervised));
    Var<float> total = l_mlm;
    out.l_mlm = l_mlm.item();
    if (soft) {
      const Var<float> l_sparse = sparsity_loss(model.mask_logits(), cfg.lambda);
      out.l_sparse = l_sparse.item();
      total = add(l_mlm, l_sparse);
    }
    out.total = total.item();
    backward(total);
  } catch (const NumericError& e) {
    throw NumericError("step " + std::to_string(step) + ": " + e.what() + " (l_mlm=" +
                       std::to_string(out.l_mlm) + ", l_sparse=" + std::to_string(out.l_sparse) + ")");
  }

  if (cfg.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : model.params())
      for (const float g : p.var.grad()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
      throw NumericError("step " + std::to_string(step) + ": non-finite gradient norm");
    }
    if (norm > cfg.clip_norm) {
      const float f = static_cast<float>(cfg.clip_norm / norm);
      for (auto& p : model.params())
        if (!p.var.grad().empty())
          for (auto& g : p.var.grad_buffer()) g *= f;
    }
  }
  const double lr = lr_at(step, cfg);
  opt.step(model, lr, cfg.lr > 0.0 ? cfg.mask_lr * lr / cfg.lr : 0.0);
  return out;
}

void prepare_mode(CaptionModel<float>& model, TrainMode mode) {
  Var<float>& p = model.mask_logits();
  switch (mode) {
    case TrainMode::kSoft:
      model.set_mode(MaskMode::kSoft);
      p.set_requires_grad(true);
      return;
    case TrainMode::kFull:
      model.set_mode(MaskMode::kFull);
      break;
    case TrainMode::kHeuristic:
      model.set_mode(MaskMode::kHeuristic);
      break;
    case TrainMode::kBinaryFinetune: {
      const MaskGrid bin = binarize(mask_from_logits(p.value(), model.grid()));
      for (std::size_t i = 0; i < bin.values.size(); ++i) {
        p.mutable_value().data[i] = bin.values[i] == 1.0 ? 40.0f : -40.0f;
      }
      model.set_mode(MaskMode::kBinary);
      break;
    }
  }
  p.set_requires_grad(false);
}

std::string metrics_csv_header() {
  return "step,lr,l_mlm,l_sparse,mask_mean_activation,frac_below_0.01,val_cider";
}

std::string format_metrics_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6f,%.6f,%.6f,%.6f,", r.step, r.lr, r.l_mlm, r.l_sparse,
                r.mask_mean_activation, r.frac_below_001);
  std::string s = buf;
  if (r.val_cider) {
    std::snprintf(buf, sizeof buf, "%.4f", *r.val_cider);
    s += buf;
  }
  return s;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << metrics_csv_header() << '\n';
  for (const auto& r : rows) out << format_metrics_row(r) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

MaskGrid effective_mask(const CaptionModel<float>& model) {
  const auto& e = model.config().encoder;
  switch (e.mode) {
    case MaskMode::kFull: return MaskGrid(model.grid(), 1.0);
    case MaskMode::kHeuristic: return heuristic_mask(e.heuristic, e.heuristic_width, model.grid());
    case MaskMode::kBinary: return binarize(mask_from_logits(model.mask_logits().value(), model.grid()));
    case MaskMode::kSoft: break;
  }
  return mask_from_logits(model.mask_logits().value(), model.grid());
}

TrainResult run_training(CaptionModel<float>& model, const ClipSource& train, const ClipSource& val,
                         const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  if (train.size() == 0) throw Error("training split is empty");
  prepare_mode(model, cfg.mode);
  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

  AdamW opt(cfg.weight_decay);
  TrainResult result;
  const std::size_t n = model.text_len();
  const Vocabulary& vocab = model.config().vocab;

  // Epoch-wise shuffled order over the training clips.
  std::vector<std::size_t> order(train.size());
  std::size_t cursor = order.size(), epoch = 0;
  auto next_indices = [&]() {
    std::vector<std::size_t> idx;
    while (idx.size() < cfg.batch) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        SplitMix64 rng(mix_seed(cfg.seed, 0xe90c0000ULL + epoch++));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    return idx;
  };

  double sum_mlm = 0.0, sum_sparse = 0.0;
  std::size_t since_log = 0;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const TrainBatch batch = make_batch(train, next_indices(), vocab, n, cfg.mask_ratio,
                                        cfg.mlm_include_eos, mix_seed(cfg.seed ^ 0x6d6c6dULL, step));
    result.last = train_step(model, opt, batch, cfg, step);
    sum_mlm += result.last.l_mlm;
    sum_sparse += result.last.l_sparse;
    ++since_log;

    const bool last = step == cfg.steps;
    const bool eval = last || (cfg.eval_interval > 0 && step % cfg.eval_interval == 0);
    if (last || eval || step % cfg.log_interval == 0) {
      MetricsRow row;
      row.step = step;
      row.lr = lr_at(step, cfg);
      row.l_mlm = sum_mlm / static_cast<double>(since_log);
      row.l_sparse = sum_sparse / static_cast<double>(since_log);
      const SparsityStats st = sparsity_stats(effective_mask(model));
      row.mask_mean_activation = st.mean_activation;
      row.frac_below_001 = st.frac_below_zero;
      if (eval && val.size() > 0) {
        row.val_cider = validation_cider(model, val, opts.decode);
        result.val_cider = *row.val_cider;
      }
      sum_mlm = sum_sparse = 0.0;
      since_log = 0;
      result.log.push_back(row);
      if (opts.on_log) opts.on_log(row);
    }
    if (!opts.out_dir.empty() && cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0) {
      save_checkpoint(opts.out_dir / ("step" + std::to_string(step) + ".bin"), make_checkpoint(model));
    }
  }
  if (!opts.out_dir.empty()) {
    write_metrics_csv(opts.out_dir / "metrics.csv", result.log);
    save_checkpoint(opts.out_dir / "final.bin", make_checkpoint(model));
  }
  return result;
}

Dataset open_dataset(const RunConfig& cfg) {
  Dataset d;
  if (!cfg.train.data.empty()) {
    const std::filesystem::path root(cfg.train.data);
    d.train = read_split(root / "train");
    d.val = read_split(root / "val");
    d.vocab = read_vocab(root / "train" / "vocab.txt");
    return d;
  }
  GeneratorConfig g = cfg.model.generator();
  g.min_speed = cfg.train.min_speed;
  g.max_speed = cfg.train.max_speed;
  g.radius = cfg.train.radius;
  auto train = std::make_unique<SyntheticSplit>(split_seed(cfg.train.data_seed, "train"), cfg.train.train_clips, g);
  auto val = std::make_unique<SyntheticSplit>(split_seed(cfg.train.data_seed, "val"), cfg.train.val_clips, g);
  std::vector<std::string> captions;
  for (std::size_t i = 0; i < train->size(); ++i) captions.push_back(train->caption(i));
  d.vocab = build_vocab(captions, 1);
  d.train = std::move(train);
  d.val = std::move(val);
  return d;
}

RunOutput train_from_config(const RunConfig& cfg, const Dataset& data, const TrainOptions& opts) {
  cfg.train.validate();
  RunOutput out;
  if (!cfg.train.init_checkpoint.empty() && !cfg.train.init_mask_only) {
    const Checkpoint ck = load_checkpoint(cfg.train.init_checkpoint);
    out.model = std::make_unique<CaptionModel<float>>(model_from_checkpoint<float>(ck));
  } else {
    ModelConfig mc = cfg.model;
    mc.vocab = data.vocab;
    out.model = std::make_unique<CaptionModel<float>>(mc, cfg.train.seed);
    if (!cfg.train.init_checkpoint.empty()) {
      restore(load_checkpoint(cfg.train.init_checkpoint), RestoreScope::kMaskOnly, *out.model);
    }
  }
  out.result = run_training(*out.model, *data.train, *data.val, cfg.train, opts);
  return out;
}

}  // namespace sparsecap
