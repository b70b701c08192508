#pragma once

// Corpus BLEU, Rouge-L and perplexity. Both text metrics use tokenize()
// from text.hpp: lowercased, punctuation split off.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cspeech/error.hpp"
#include "cspeech/generator.hpp"
#include "cspeech/text.hpp"

namespace cspeech::eval {

struct BleuStats {
  std::array<long, 4> matches{};
  std::array<long, 4> totals{};
  long hypothesis_length = 0;
  long reference_length = 0;
};

inline BleuStats bleu_stats(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size()) throw DimensionError("bleu: hypothesis and reference counts differ");
  BleuStats s;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    const auto h = tokenize(hypotheses[i]), r = tokenize(references[i]);
    s.hypothesis_length += static_cast<long>(h.size());
    s.reference_length += static_cast<long>(r.size());
    for (size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<std::string>, long> ref_counts;
      for (size_t k = 0; k + n <= r.size(); ++k) ++ref_counts[{r.begin() + k, r.begin() + k + n}];
      std::map<std::vector<std::string>, long> hyp_counts;
      for (size_t k = 0; k + n <= h.size(); ++k) ++hyp_counts[{h.begin() + k, h.begin() + k + n}];
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        s.matches[n - 1] += std::min(count, it == ref_counts.end() ? 0L : it->second);
        s.totals[n - 1] += count;
      }
    }
  }
  return s;
}

// Corpus-level 4-gram BLEU with brevity penalty and no smoothing, on a
// 0-100 scale. Orders for which the hypotheses contain no n-grams at all
// are left out of the geometric mean.
inline double corpus_bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  if (hypotheses.empty()) throw DimensionError("bleu: empty corpus");
  const auto s = bleu_stats(hypotheses, references);
  if (s.hypothesis_length == 0) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < 4; ++n) {
    if (s.totals[n] == 0) continue;
    if (s.matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]));
    ++orders;
  }
  const double c = static_cast<double>(s.hypothesis_length), r = static_cast<double>(s.reference_length);
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum / orders);
}

inline size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// LCS F-measure with equal weight on precision and recall, in [0,1].
inline double rouge_l(const std::string& hypothesis, const std::string& reference) {
  const auto h = tokenize(hypothesis), r = tokenize(reference);
  if (h.empty() || r.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(h, r));
  if (lcs == 0) return 0.0;
  const double p = lcs / static_cast<double>(h.size()), rec = lcs / static_cast<double>(r.size());
  return 2 * p * rec / (p + rec);
}

// Mean sentence-level Rouge-L F, in [0,1].
inline double mean_rouge_l(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size()) throw DimensionError("rouge: hypothesis and reference counts differ");
  if (hypotheses.empty()) throw DimensionError("rouge: empty corpus");
  double total = 0.0;
  for (size_t i = 0; i < hypotheses.size(); ++i) total += rouge_l(hypotheses[i], references[i]);
  return total / static_cast<double>(hypotheses.size());
}

// exp of the token-weighted mean cross-entropy of the gold response tokens;
// positions holding code tokens carry no target and do not count.
inline double perplexity(const Generator& generator, const std::vector<GeneratorBatch>& batches) {
  if (batches.empty()) throw EmptyCorpusError("perplexity: empty dataset");
  return std::exp(generator.mean_loss(batches));
}

}  // namespace cspeech::eval
