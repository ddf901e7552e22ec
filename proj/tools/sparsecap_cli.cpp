// Command-line front end: dataset generation, training, decoding, evaluation,
// mask utilities and the gradient suite.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "sparsecap/checkpoint.hpp"
#include "sparsecap/gradsuite.hpp"
#include "sparsecap/mask_tools.hpp"
#include "sparsecap/metrics.hpp"
#include "sparsecap/training.hpp"

namespace fs = std::filesystem;
using namespace sparsecap;

namespace {

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

int cmd_gen_data(const std::string& config, std::uint64_t seed, const std::string& out, std::size_t clips,
                 std::optional<std::size_t> val_clips) {
  RunConfig cfg = config_or_default(config);
  cfg.train.data.clear();
  cfg.train.data_seed = seed;
  cfg.train.train_clips = clips;
  cfg.train.val_clips = val_clips.value_or(std::max<std::size_t>(1, clips / 10));
  const Dataset d = open_dataset(cfg);
  write_split(fs::path(out) / "train", *d.train, d.vocab);
  write_split(fs::path(out) / "val", *d.val, d.vocab);
  std::cout << "wrote " << d.train->size() << " train and " << d.val->size() << " val clips to " << out
            << "\n";
  return 0;
}

int cmd_train(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  RunConfig cfg = config_or_default(config);
  if (seed) cfg.train.seed = *seed;
  const Dataset d = open_dataset(cfg);
  TrainOptions opts;
  opts.out_dir = out;
  opts.on_log = [](const MetricsRow& r) { std::cout << format_metrics_row(r) << std::endl; };
  std::cout << metrics_csv_header() << std::endl;
  train_from_config(cfg, d, opts);
  return 0;
}

int cmd_decode(const std::string& checkpoint, const std::string& data, const std::string& out,
               std::optional<std::size_t> max_len) {
  const auto model = model_from_checkpoint<float>(load_checkpoint(checkpoint));
  const auto split = read_split(data);
  DecodeConfig dc;
  if (max_len && *max_len == 0) throw ConfigError("--max-len must be at least 1");
  dc.max_len = max_len.value_or(0);
  const auto captions = decode_source(model, *split, dc);
  std::ofstream f(out, std::ios::binary);
  if (!f) throw IoError("cannot open " + out + " for writing");
  for (const auto& c : captions) f << c << '\n';
  if (!f) throw IoError("failed writing " + out);
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& ref, const std::string& out) {
  const std::string csv = format_metrics_csv(run_eval(pred, ref));
  std::cout << csv;
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    f << csv;
    if (!f) throw IoError("failed writing " + out);
  }
  return 0;
}

int cmd_mask_export(const std::string& in, const std::string& out, const std::string& format) {
  const Checkpoint ck = load_checkpoint(in);
  const StoredTensor* p = ck.find(kMaskParam);
  if (!p) throw FormatError(in + ": no mask tensor");
  const MaskGrid mask = mask_from_logits(p->as<double>(), ck.model_config().grid());
  MaskFormat f = MaskFormat::kPgm;
  if (format == "csv" || (format.empty() && fs::path(out).extension() == ".csv")) f = MaskFormat::kCsv;
  export_mask(mask, out, f);
  return 0;
}

int cmd_mask_binarize(const std::string& in, const std::string& out, double threshold) {
  auto model = model_from_checkpoint<float>(load_checkpoint(in));
  const MaskGrid bin = binarize(mask_from_logits(model.mask_logits().value(), model.grid()), threshold);
  auto& p = model.mask_logits().mutable_value().data;
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = bin.values[i] == 1.0 ? 40.0f : -40.0f;
  model.set_mode(MaskMode::kBinary);
  save_checkpoint(out, make_checkpoint(model));
  return 0;
}

int cmd_mask_interp(const std::string& in, std::size_t t_new, const std::string& out) {
  Checkpoint ck = load_checkpoint(in);
  ModelConfig cfg = ck.model_config();
  const GridDims g = cfg.grid();
  for (auto& t : ck.tensors) {
    if (t.name == kMaskParam) {
      const MaskGrid m = interpolate_mask_temporal(mask_from_logits(t.as<double>(), g), t_new);
      const Tensor<float> p = logits_from_mask<float>(m);
      t.dtype = DType::kF32;
      t.shape = p.shape;
      t.f32 = p.data;
      t.f64.clear();
    } else if (t.name == "video.pos") {
      const Tensor<double> pos = interpolate_rows_temporal(t.as<double>(), g, t_new);
      t.shape = pos.shape;
      if (t.dtype == DType::kF32) t.f32.assign(pos.data.begin(), pos.data.end());
      else t.f64 = pos.data;
    }
  }
  cfg.frames = t_new * cfg.patch.patch_t;
  ck.config_text = cfg.to_text();
  save_checkpoint(out, ck);
  std::cout << "mask grid t=" << t_new << " h=" << g.h << " w=" << g.w << " (M=" << t_new * g.spatial()
            << ")\n";
  return 0;
}

int cmd_mask_stats(const std::string& in, double threshold) {
  const Checkpoint ck = load_checkpoint(in);
  const StoredTensor* p = ck.find(kMaskParam);
  if (!p) throw FormatError(in + ": no mask tensor");
  const GridDims g = ck.model_config().grid();
  const SparsityStats st = sparsity_stats(mask_from_logits(p->as<double>(), g), threshold);
  std::printf("grid,%zu,%zu,%zu\nmean_activation,%.6f\nfrac_below_%g,%.6f\nfrac_below_0.5,%.6f\n", g.t, g.h,
              g.w, st.mean_activation, threshold, st.frac_below_zero, st.frac_below_half);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t points) {
  const auto entries = run_grad_suite(seed, points);
  std::map<std::string, double> per_module;
  std::printf("module,check,max_rel_error,coords\n");
  for (const auto& e : entries) {
    std::printf("%s,%s,%.3e,%zu\n", e.module.c_str(), e.check.c_str(), e.max_rel_error, e.coords);
    per_module[e.module] = std::max(per_module[e.module], e.max_rel_error);
  }
  bool ok = true;
  for (const auto& [m, err] : per_module) {
    std::printf("module %s max_rel_error %.3e %s\n", m.c_str(), err, err <= 1e-5 ? "ok" : "FAIL");
    ok = ok && err <= 1e-5;
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-attention video captioning toolkit"};
  app.require_subcommand(1);

  std::string config, out, checkpoint, data, pred, ref, in, format;
  std::uint64_t seed = 0;
  std::size_t clips = 2000, points = 5, t_new = 0;
  std::optional<std::size_t> val_clips, max_len;
  std::optional<std::uint64_t> train_seed;
  double threshold = 0.5, zero_threshold = 0.01;

  auto* gen = app.add_subcommand("gen-data", "Render a synthetic dataset (train/ and val/ splits)");
  gen->add_option("--config", config, "Config file (clip dimensions, speeds)");
  gen->add_option("--seed", seed, "Dataset seed")->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--clips", clips, "Training clips");
  gen->add_option("--val-clips", val_clips, "Validation clips (default clips/10)");

  auto* train = app.add_subcommand("train", "Train a captioner");
  train->add_option("--config", config, "Config file")->required();
  train->add_option("--seed", train_seed, "Training seed (overrides the config)");
  train->add_option("--out", out, "Run directory for metrics.csv and checkpoints")->required();

  auto* decode = app.add_subcommand("decode", "Greedy captions for a dataset split");
  decode->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  decode->add_option("--data", data, "Split directory holding clips.bin")->required();
  decode->add_option("--out", out, "Caption file, one line per clip")->required();
  decode->add_option("--max-len", max_len, "Generated tokens per caption (default N-1)");
  decode->add_option("--seed", seed, "Unused; decoding is deterministic");

  auto* eval = app.add_subcommand("eval", "BLEU-4, ROUGE-L and CIDEr-D of a prediction file");
  eval->add_option("--pred", pred, "Predictions, one per line")->required();
  eval->add_option("--ref", ref, "References, tab-separated per line")->required();
  eval->add_option("--out", out, "Also write the CSV here");

  auto* mask = app.add_subcommand("mask", "Mask utilities");
  mask->require_subcommand(1);
  auto* mexport = mask->add_subcommand("export", "Write the mask as PGM or CSV");
  mexport->add_option("--in,--checkpoint", in, "Checkpoint")->required();
  mexport->add_option("--out", out, "Output file")->required();
  mexport->add_option("--format", format, "pgm or csv (default from extension)")
      ->check(CLI::IsMember({"pgm", "csv"}));
  auto* mbin = mask->add_subcommand("binarize", "Threshold the mask and switch to binary mode");
  mbin->add_option("--in,--checkpoint", in, "Checkpoint")->required();
  mbin->add_option("--out", out, "Output checkpoint")->required();
  mbin->add_option("--threshold", threshold, "Threshold in (0,1)");
  auto* minterp = mask->add_subcommand("interp", "Resample the mask to a new temporal grid");
  minterp->add_option("--in,--checkpoint", in, "Checkpoint")->required();
  minterp->add_option("--t-new", t_new, "Target temporal token count")->required()->check(CLI::PositiveNumber);
  minterp->add_option("--out", out, "Output checkpoint")->required();
  auto* mstats = mask->add_subcommand("stats", "Sparsity statistics");
  mstats->add_option("--in,--checkpoint", in, "Checkpoint")->required();
  mstats->add_option("--threshold", zero_threshold, "Zero threshold");

  auto* grad = app.add_subcommand("gradcheck", "64-bit finite-difference gradient suite");
  grad->add_option("--seed", seed, "Seed for parameter draws");
  grad->add_option("--points", points, "Parameter draws per check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e, std::cerr, std::cerr);
    return 1;
  }

  try {
    if (*gen) return cmd_gen_data(config, seed, out, clips, val_clips);
    if (*train) return cmd_train(config, train_seed, out);
    if (*decode) return cmd_decode(checkpoint, data, out, max_len);
    if (*eval) return cmd_eval(pred, ref, out);
    if (*mexport) return cmd_mask_export(in, out, format);
    if (*mbin) return cmd_mask_binarize(in, out, threshold);
    if (*minterp) return cmd_mask_interp(in, t_new, out);
    if (*mstats) return cmd_mask_stats(in, zero_threshold);
    if (*grad) return cmd_gradcheck(seed, points);
  } catch (const sparsecap::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
