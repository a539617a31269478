#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "narrative_infill/error.hpp"

namespace narrative_infill::metrics {

using Tokens = std::vector<std::string>;

namespace detail {

inline std::map<Tokens, std::size_t> ngram_counts(const Tokens& tokens, std::size_t n) {
  std::map<Tokens, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                    tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

inline void check_pairs(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, const char* what) {
  if (hyps.size() != refs.size()) throw InputError(std::string(what) + ": hypothesis/reference count mismatch");
  if (hyps.empty()) throw InputError(std::string(what) + ": empty corpus");
}

}  // namespace detail

struct BleuStats {
  std::vector<std::size_t> matches;  // clipped matches per order 1..n
  std::vector<std::size_t> totals;   // hypothesis n-grams per order 1..n
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

inline BleuStats bleu_stats(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, std::size_t n) {
  detail::check_pairs(hyps, refs, "bleu");
  BleuStats s;
  s.matches.assign(n, 0);
  s.totals.assign(n, 0);
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    s.hyp_length += hyps[i].size();
    s.ref_length += refs[i].size();
    for (std::size_t k = 1; k <= n; ++k) {
      const auto h = detail::ngram_counts(hyps[i], k);
      const auto r = detail::ngram_counts(refs[i], k);
      for (const auto& [gram, count] : h) {
        s.totals[k - 1] += count;
        if (auto it = r.find(gram); it != r.end()) s.matches[k - 1] += std::min(count, it->second);
      }
    }
  }
  return s;
}

// Corpus BLEU-n with one reference per hypothesis: geometric mean of clipped
// n-gram precisions for orders 1..n times the brevity penalty
// exp(1 - r/c) when c <= r. A zero precision is floored at 1/(2 * total),
// where total is the hypothesis n-gram count of that order (at least 1).
inline double bleu_n(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, std::size_t n) {
  if (n == 0) throw InputError("bleu: order must be >= 1");
  const auto s = bleu_stats(hyps, refs, n);
  if (s.hyp_length == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double total = static_cast<double>(std::max<std::size_t>(s.totals[k], 1));
    const double p = s.matches[k] > 0 ? static_cast<double>(s.matches[k]) / total : 1.0 / (2.0 * total);
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(s.hyp_length);
  const double r = static_cast<double>(s.ref_length);
  const double bp = c <= r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(n));
}

}  // namespace narrative_infill::metrics
