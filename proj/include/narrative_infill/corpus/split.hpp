#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "narrative_infill/corpus/corpus.hpp"
#include "narrative_infill/error.hpp"
#include "narrative_infill/rng.hpp"

namespace narrative_infill::corpus {

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct CorpusSplit {
  Corpus train;
  Corpus val;
  Corpus test;
};

// Index-level split: shuffled order, then floor(N*train), floor(N*val), and
// the remainder to test.
inline std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n, SplitRatios ratios,
                                                             std::uint64_t seed) {
  if (n == 0) throw InputError("cannot split an empty corpus");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw InputError("split ratios must be non-negative and sum to 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.train));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.val)));
  std::array<std::vector<std::size_t>, 3> parts;
  parts[0].assign(order.begin(), order.begin() + n_train);
  parts[1].assign(order.begin() + n_train, order.begin() + n_train + n_val);
  parts[2].assign(order.begin() + n_train + n_val, order.end());
  return parts;
}

inline CorpusSplit split_corpus(const Corpus& corpus, SplitRatios ratios, std::uint64_t seed) {
  const auto parts = split_indices(corpus.size(), ratios, seed);
  CorpusSplit split;
  for (auto i : parts[0]) split.train.push_back(corpus[i]);
  for (auto i : parts[1]) split.val.push_back(corpus[i]);
  for (auto i : parts[2]) split.test.push_back(corpus[i]);
  return split;
}

}  // namespace narrative_infill::corpus
