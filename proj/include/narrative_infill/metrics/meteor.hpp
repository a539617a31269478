#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "narrative_infill/metrics/bleu.hpp"

namespace narrative_infill::metrics {

// Strips the longest of {ing, es, ed, s} that leaves at least two characters.
inline std::string suffix_stem(std::string_view word) {
  for (std::string_view suffix : {"ing", "es", "ed", "s"}) {
    if (word.size() >= suffix.size() + 2 && word.ends_with(suffix)) {
      return std::string(word.substr(0, word.size() - suffix.size()));
    }
  }
  return std::string(word);
}

struct MeteorAlignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (hyp index, ref index), by hyp index
  std::size_t chunks = 0;
};

// One-to-one unigram alignment: exact matches first, then matches on
// suffix-stripped forms among the leftovers. Within each stage every
// hypothesis token, left to right, takes the leftmost free reference token.
inline MeteorAlignment meteor_align(const Tokens& hyp, const Tokens& ref) {
  std::vector<char> hyp_used(hyp.size(), 0), ref_used(ref.size(), 0);
  MeteorAlignment a;
  auto stage = [&](auto key) {
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      if (hyp_used[i]) continue;
      const auto hk = key(hyp[i]);
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (!ref_used[j] && key(ref[j]) == hk) {
          hyp_used[i] = ref_used[j] = 1;
          a.pairs.emplace_back(i, j);
          break;
        }
      }
    }
  };
  stage([](const std::string& w) { return w; });
  stage([](const std::string& w) { return suffix_stem(w); });
  std::sort(a.pairs.begin(), a.pairs.end());
  for (std::size_t k = 0; k < a.pairs.size(); ++k) {
    const bool continues = k > 0 && a.pairs[k].first == a.pairs[k - 1].first + 1 &&
                           a.pairs[k].second == a.pairs[k - 1].second + 1;
    if (!continues) ++a.chunks;
  }
  return a;
}

// F = 10PR / (R + 9P); penalty = 0.5 * (chunks / m)^3; score = F * (1 - penalty).
inline double meteor_lite_pair(const Tokens& hyp, const Tokens& ref) {
  const auto a = meteor_align(hyp, ref);
  const double m = static_cast<double>(a.pairs.size());
  if (m == 0.0) return 0.0;
  const double p = m / static_cast<double>(hyp.size());
  const double r = m / static_cast<double>(ref.size());
  const double f = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(static_cast<double>(a.chunks) / m, 3.0);
  return f * (1.0 - penalty);
}

inline double meteor_lite(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  detail::check_pairs(hyps, refs, "meteor_lite");
  double sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) sum += meteor_lite_pair(hyps[i], refs[i]);
  return sum / static_cast<double>(hyps.size());
}

}  // namespace narrative_infill::metrics
