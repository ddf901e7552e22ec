#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace sparsecap {

using TokenSeq = std::vector<std::string>;

struct EvalItem {
  TokenSeq candidate;  // may be empty
  std::vector<TokenSeq> references;
};

using EvalCorpus = std::vector<EvalItem>;

// Lowercase whitespace tokenization of raw strings.
EvalCorpus make_corpus(const std::vector<std::string>& candidates,
                       const std::vector<std::vector<std::string>>& references);

// Corpus BLEU-4: clipped precisions n=1..4 pooled over items, closest
// reference length (ties to the shorter), no smoothing.
double bleu4(const EvalCorpus& corpus);

// Mean over items of the best LCS F-measure (beta 1.2) against any reference.
double rouge_l(const EvalCorpus& corpus);

// CIDEr-D with corpus-local IDF (one document per item), count clipping and a
// Gaussian length penalty (sigma 6), scaled by 10.
double cider_d(const EvalCorpus& corpus);

struct MetricBundle {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider_d = 0.0;
};

MetricBundle score_corpus(const EvalCorpus& corpus);

// Predictions: one caption per line. References: one line per item, several
// references separated by tabs.
MetricBundle run_eval(const std::filesystem::path& predictions, const std::filesystem::path& references);

// "metric,value" lines with four decimals.
std::string format_metrics_csv(const MetricBundle& m);

}  // namespace sparsecap
