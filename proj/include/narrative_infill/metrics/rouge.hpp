#pragma once

#include <string>
#include <vector>

#include "narrative_infill/metrics/bleu.hpp"

namespace narrative_infill::metrics {

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// LCS F-measure with beta = 1. Two empty sequences score 1; one empty, 0.
inline double rouge_l_pair(const Tokens& hyp, const Tokens& ref) {
  if (hyp.empty() && ref.empty()) return 1.0;
  if (hyp.empty() || ref.empty()) return 0.0;
  const double l = static_cast<double>(lcs_length(hyp, ref));
  if (l == 0.0) return 0.0;
  const double p = l / static_cast<double>(hyp.size());
  const double r = l / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

// Mean of per-pair scores.
inline double rouge_l(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  detail::check_pairs(hyps, refs, "rouge_l");
  double sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) sum += rouge_l_pair(hyps[i], refs[i]);
  return sum / static_cast<double>(hyps.size());
}

}  // namespace narrative_infill::metrics
