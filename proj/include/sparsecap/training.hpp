#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sparsecap/config.hpp"
#include "sparsecap/data.hpp"
#include "sparsecap/decode.hpp"
#include "sparsecap/mask_tools.hpp"
#include "sparsecap/model.hpp"

namespace sparsecap {

// Linear warmup 0 -> lr over [0, warmup·steps], then linear decay to 0 at steps.
double lr_at(std::size_t step, const TrainConfig& cfg);

// Adaptive moments with decoupled weight decay. Decay applies to weight
// matrices and embedding tables; biases, norm parameters and the mask are not
// decayed. Parameters without requires_grad are skipped entirely.
class AdamW {
 public:
  explicit AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // One update from the grads currently held by the model; the mask uses
  // `mask_lr`.
  void step(CaptionModel<float>& model, double lr, double mask_lr);
  std::size_t steps() const { return t_; }

 private:
  double wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

struct TrainBatch {
  std::vector<VideoClip> clips;
  std::vector<std::int32_t> ids;       // corrupted captions, B·N
  std::vector<std::int32_t> targets;   // B·N
  std::vector<std::uint8_t> supervised;  // B·N

  std::size_t size() const { return clips.size(); }
  std::vector<const VideoClip*> clip_ptrs() const;
};

TrainBatch make_batch(const ClipSource& source, const std::vector<std::size_t>& indices,
                      const Vocabulary& vocab, std::size_t n, double mask_ratio, bool include_eos,
                      std::uint64_t seed);

struct StepLosses {
  double l_mlm = 0.0;
  double l_sparse = 0.0;
  double total = 0.0;
};

// Forward, L_MLM + L_sparse (soft mode only), backward, clip, AdamW at
// lr_at(step). `step` is 1-based.
StepLosses train_step(CaptionModel<float>& model, AdamW& opt, const TrainBatch& batch,
                      const TrainConfig& cfg, std::size_t step);

// Prepares the model for a training mode: sets the attention mode and
// freezes the mask outside soft training. binary-finetune first rewrites the
// mask as ±40 pre-activations thresholded at 0.5.
void prepare_mode(CaptionModel<float>& model, TrainMode mode);

struct MetricsRow {
  std::size_t step = 0;
  double lr = 0.0;
  double l_mlm = 0.0;     // mean over the interval
  double l_sparse = 0.0;  // mean over the interval
  double mask_mean_activation = 0.0;
  double frac_below_001 = 0.0;
  std::optional<double> val_cider;
};

std::string metrics_csv_header();
std::string format_metrics_row(const MetricsRow& row);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  DecodeConfig decode;
  std::function<void(const MetricsRow&)> on_log;
};

struct TrainResult {
  std::vector<MetricsRow> log;
  StepLosses last;
  double val_cider = 0.0;
};

// Mask activations as the model's current mode uses them.
MaskGrid effective_mask(const CaptionModel<float>& model);

TrainResult run_training(CaptionModel<float>& model, const ClipSource& train, const ClipSource& val,
                         const TrainConfig& cfg, const TrainOptions& opts = {});

struct Dataset {
  std::unique_ptr<ClipSource> train;
  std::unique_ptr<ClipSource> val;
  Vocabulary vocab;
};

// A gen-data directory when cfg.train.data is set, otherwise synthetic splits.
Dataset open_dataset(const RunConfig& cfg);

struct RunOutput {
  std::unique_ptr<CaptionModel<float>> model;
  TrainResult result;
};

// Whole training run from a config: dataset, model, optional init
// checkpoint, training, and (with out_dir) metrics.csv plus final.bin.
RunOutput train_from_config(const RunConfig& cfg, const Dataset& data, const TrainOptions& opts = {});

}  // namespace sparsecap
