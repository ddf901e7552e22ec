#include "sparsecap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "sparsecap/data.hpp"
#include "sparsecap/errors.hpp"

namespace sparsecap {

namespace {

using NGram = std::vector<std::string>;
using Counts = std::map<NGram, double>;

Counts ngram_counts(const TokenSeq& toks, std::size_t n) {
  Counts c;
  if (toks.size() < n) return c;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    c[NGram(toks.begin() + static_cast<std::ptrdiff_t>(i), toks.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
  }
  return c;
}

void require_nonempty(const EvalCorpus& corpus, const char* name) {
  if (corpus.empty()) throw Error(std::string(name) + ": empty corpus");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].references.empty()) {
      throw Error(std::string(name) + ": item " + std::to_string(i) + " has no reference");
    }
  }
}

std::size_t lcs(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

EvalCorpus make_corpus(const std::vector<std::string>& candidates,
                       const std::vector<std::vector<std::string>>& references) {
  if (candidates.size() != references.size()) {
    throw Error("corpus has " + std::to_string(candidates.size()) + " candidates but " +
                std::to_string(references.size()) + " reference groups");
  }
  EvalCorpus corpus(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    corpus[i].candidate = tokenize(candidates[i]);
    for (const auto& r : references[i]) corpus[i].references.push_back(tokenize(r));
  }
  return corpus;
}

double bleu4(const EvalCorpus& corpus) {
  require_nonempty(corpus, "bleu4");
  double matched[4] = {0, 0, 0, 0};
  double total[4] = {0, 0, 0, 0};
  double c = 0.0, r = 0.0;
  for (const auto& item : corpus) {
    const std::size_t clen = item.candidate.size();
    c += static_cast<double>(clen);
    std::size_t best = item.references.front().size();
    for (const auto& ref : item.references) {
      const std::size_t rl = ref.size();
      const auto dist = [clen](std::size_t x) { return x > clen ? x - clen : clen - x; };
      if (dist(rl) < dist(best) || (dist(rl) == dist(best) && rl < best)) best = rl;
    }
    r += static_cast<double>(best);
    for (std::size_t n = 1; n <= 4; ++n) {
      const Counts cand = ngram_counts(item.candidate, n);
      Counts max_ref;
      for (const auto& ref : item.references)
        for (const auto& [g, k] : ngram_counts(ref, n)) max_ref[g] = std::max(max_ref[g], k);
      for (const auto& [g, k] : cand) {
        auto it = max_ref.find(g);
        matched[n - 1] += std::min(k, it == max_ref.end() ? 0.0 : it->second);
        total[n - 1] += k;
      }
    }
  }
  double log_p = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (total[n] == 0.0 || matched[n] == 0.0) return 0.0;
    log_p += std::log(matched[n] / total[n]);
  }
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_p / 4.0);
}

double rouge_l(const EvalCorpus& corpus) {
  require_nonempty(corpus, "rouge_l");
  constexpr double beta2 = 1.2 * 1.2;
  double acc = 0.0;
  for (const auto& item : corpus) {
    double best = 0.0;
    if (!item.candidate.empty()) {
      for (const auto& ref : item.references) {
        if (ref.empty()) continue;
        const double l = static_cast<double>(lcs(item.candidate, ref));
        if (l == 0.0) continue;
        const double p = l / static_cast<double>(item.candidate.size());
        const double rc = l / static_cast<double>(ref.size());
        best = std::max(best, (1.0 + beta2) * p * rc / (rc + beta2 * p));
      }
    }
    acc += best;
  }
  return acc / static_cast<double>(corpus.size());
}

double cider_d(const EvalCorpus& corpus) {
  require_nonempty(corpus, "cider_d");
  constexpr std::size_t kN = 4;
  constexpr double kSigma = 6.0;
  const double log_docs = std::log(static_cast<double>(corpus.size()));

  // Document frequency: number of items whose reference set contains a gram.
  std::map<NGram, double> df;
  for (const auto& item : corpus) {
    std::set<NGram> seen;
    for (const auto& ref : item.references)
      for (std::size_t n = 1; n <= kN; ++n)
        for (const auto& [g, k] : ngram_counts(ref, n)) seen.insert(g);
    for (const auto& g : seen) df[g] += 1.0;
  }
  auto idf = [&](const NGram& g) {
    auto it = df.find(g);
    return log_docs - std::log(std::max(1.0, it == df.end() ? 0.0 : it->second));
  };

  struct Vec {
    Counts tf[kN];
    Counts w[kN];
    double norm[kN] = {};
    double tf_norm[kN] = {};
    double length = 0.0;
  };
  auto vectorize = [&](const TokenSeq& toks) {
    Vec v;
    v.length = static_cast<double>(toks.size());
    for (std::size_t n = 0; n < kN; ++n) {
      v.tf[n] = ngram_counts(toks, n + 1);
      double s = 0.0, t = 0.0;
      for (const auto& [g, k] : v.tf[n]) {
        const double x = k * idf(g);
        v.w[n][g] = x;
        s += x * x;
        t += k * k;
      }
      v.norm[n] = std::sqrt(s);
      v.tf_norm[n] = std::sqrt(t);
    }
    return v;
  };

  // Clipped dot product min(h, r)·r over the grams of h.
  auto clipped_dot = [](const Counts& h, const Counts& r) {
    double acc = 0.0;
    for (const auto& [g, x] : h) {
      auto it = r.find(g);
      if (it != r.end()) acc += std::min(x, it->second) * it->second;
    }
    return acc;
  };

  double total = 0.0;
  for (const auto& item : corpus) {
    const Vec hyp = vectorize(item.candidate);
    double item_score = 0.0;
    for (const auto& ref_toks : item.references) {
      const Vec ref = vectorize(ref_toks);
      const double delta = hyp.length - ref.length;
      const double penalty = std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
      double sim = 0.0;
      for (std::size_t n = 0; n < kN; ++n) {
        double val = 0.0;
        if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) {
          val = clipped_dot(hyp.w[n], ref.w[n]) / (hyp.norm[n] * ref.norm[n]);
        } else if (hyp.norm[n] == 0.0 && ref.norm[n] == 0.0 && hyp.tf_norm[n] != 0.0 &&
                   ref.tf_norm[n] != 0.0) {
          // Every gram carries zero IDF (a single document, or grams shared by
          // all documents): fall back to the plain count cosine.
          val = clipped_dot(hyp.tf[n], ref.tf[n]) / (hyp.tf_norm[n] * ref.tf_norm[n]);
        }
        sim += std::min(val, 1.0) * penalty;
      }
      item_score += sim / static_cast<double>(kN);
    }
    total += 10.0 * item_score / static_cast<double>(item.references.size());
  }
  return total / static_cast<double>(corpus.size());
}

MetricBundle score_corpus(const EvalCorpus& corpus) {
  return {bleu4(corpus), rouge_l(corpus), cider_d(corpus)};
}

MetricBundle run_eval(const std::filesystem::path& predictions, const std::filesystem::path& references) {
  const auto preds = read_lines(predictions);
  const auto refs = read_lines(references);
  if (preds.size() != refs.size()) {
    throw FormatError("predictions " + predictions.string() + " have " + std::to_string(preds.size()) +
                      " lines but references " + references.string() + " have " +
                      std::to_string(refs.size()));
  }
  std::vector<std::vector<std::string>> groups(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    std::size_t pos = 0;
    while (true) {
      const std::size_t tab = refs[i].find('\t', pos);
      groups[i].push_back(refs[i].substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
  }
  if (preds.empty()) throw FormatError("predictions file " + predictions.string() + " is empty");
  return score_corpus(make_corpus(preds, groups));
}

std::string format_metrics_csv(const MetricBundle& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "metric,value\nbleu4,%.4f\nrouge_l,%.4f\ncider_d,%.4f\n", m.bleu4,
                m.rouge_l, m.cider_d);
  return buf;
}

}  // namespace sparsecap
