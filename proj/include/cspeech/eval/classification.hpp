#pragma once

#include <vector>

#include "cspeech/error.hpp"

namespace cspeech::eval {

// Per-class F1 of the positive class, averaged over label columns. Rows are
// examples, columns classes; entries are 0/1.
inline double macro_f1(const std::vector<std::vector<int>>& gold, const std::vector<std::vector<int>>& predicted) {
  if (gold.size() != predicted.size()) throw DimensionError("macro_f1: row count mismatch");
  if (gold.empty()) return 0.0;
  const size_t classes = gold[0].size();
  double total = 0.0;
  for (size_t c = 0; c < classes; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < gold.size(); ++i) {
      if (gold[i].size() != classes || predicted[i].size() != classes)
        throw DimensionError("macro_f1: class count mismatch");
      tp += gold[i][c] && predicted[i][c];
      fp += !gold[i][c] && predicted[i][c];
      fn += gold[i][c] && !predicted[i][c];
    }
    total += tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return total / static_cast<double>(classes);
}

}  // namespace cspeech::eval
