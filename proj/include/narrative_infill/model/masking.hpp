#pragma once

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "narrative_infill/error.hpp"
#include "narrative_infill/model/config.hpp"
#include "narrative_infill/nn/matrix.hpp"
#include "narrative_infill/rng.hpp"

namespace narrative_infill::model {

// Step indices whose local features are replaced by a zero tensor.
struct MaskPlan {
  std::vector<std::size_t> masked_indices;  // sorted, distinct

  std::size_t count() const { return masked_indices.size(); }
  bool empty() const { return masked_indices.empty(); }
  bool contains(std::size_t k) const {
    return std::binary_search(masked_indices.begin(), masked_indices.end(), k);
  }

  static MaskPlan of(std::vector<std::size_t> indices) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    return MaskPlan{std::move(indices)};
  }

  void validate(std::size_t n_steps) const {
    for (auto k : masked_indices) {
      if (k >= n_steps) {
        throw InputError("mask index " + std::to_string(k) + " out of range for " +
                         std::to_string(n_steps) + " steps");
      }
    }
  }
};

// XE: 0. V-Infill: 1. V-InfillR: 0 for the first quarter of epochs, 1 for
// the second quarter, 2 afterwards (quarters are floor(T/4), floor(T/2)).
inline std::size_t mask_count_for_epoch(std::size_t epoch, std::size_t total_epochs, Variant variant) {
  switch (variant) {
    case Variant::xe: return 0;
    case Variant::v_infill: return 1;
    case Variant::v_infill_r:
      if (epoch < total_epochs / 4) return 0;
      if (epoch < total_epochs / 2) return 1;
      return 2;
  }
  return 0;
}

// Uniform sample of `count` distinct indices from [0, n_steps). Consumes no
// randomness when count == 0.
inline MaskPlan sample_mask_indices(std::size_t n_steps, std::size_t count, Rng& rng) {
  if (count > n_steps) {
    throw InputError("cannot mask " + std::to_string(count) + " of " + std::to_string(n_steps) + " steps");
  }
  if (count == 0) return {};
  std::vector<std::size_t> pool(n_steps);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(n_steps - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return MaskPlan::of(std::move(pool));
}

// Rows listed in the plan become all-zero; others are copied unchanged.
template <typename T>
nn::Matrix<T> apply_mask(const nn::Matrix<T>& features, const MaskPlan& plan) {
  plan.validate(features.rows);
  nn::Matrix<T> out = features;
  for (auto k : plan.masked_indices) std::fill(out.row(k).begin(), out.row(k).end(), T{0});
  return out;
}

}  // namespace narrative_infill::model
