#pragma once

#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "narrative_infill/corpus/corpus.hpp"
#include "narrative_infill/error.hpp"

namespace narrative_infill::corpus {

struct UniqueWordFractions {
  std::vector<double> per_step;
  double mean = 0.0;
  // Steps with no tokens; they contribute 0 to the mean.
  std::vector<std::size_t> empty_steps;
};

// For each step: |types(step) \ types(other steps)| / |types(step)|.
// A narrative with a single step has fraction 1.
inline UniqueWordFractions unique_word_fraction(const Narrative& narrative) {
  const auto& steps = narrative.steps;
  if (steps.empty()) throw InputError("narrative " + narrative.id + " has no steps");
  std::vector<std::set<std::string>> types;
  types.reserve(steps.size());
  for (const auto& s : steps) types.emplace_back(s.tokens.begin(), s.tokens.end());

  UniqueWordFractions out;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    if (types[k].empty()) {
      out.per_step.push_back(0.0);
      out.empty_steps.push_back(k);
      continue;
    }
    std::size_t unique = 0;
    for (const auto& t : types[k]) {
      bool elsewhere = false;
      for (std::size_t j = 0; j < steps.size() && !elsewhere; ++j) {
        elsewhere = j != k && types[j].count(t) != 0;
      }
      unique += elsewhere ? 0 : 1;
    }
    out.per_step.push_back(static_cast<double>(unique) / static_cast<double>(types[k].size()));
  }
  double sum = 0.0;
  for (double f : out.per_step) sum += f;
  out.mean = sum / static_cast<double>(out.per_step.size());
  return out;
}

struct StatsReport {
  std::size_t n_narratives = 0;
  std::size_t n_steps_total = 0;
  std::size_t n_words_total = 0;
  double avg_steps = 0.0;
  double avg_words_per_step = 0.0;
  std::size_t vocab_size = 0;
  double avg_unique_word_fraction = 0.0;
  std::size_t n_empty_steps = 0;
};

inline StatsReport corpus_stats(const Corpus& corpus) {
  if (corpus.empty()) throw InputError("cannot compute statistics of an empty corpus");
  StatsReport r;
  std::unordered_set<std::string> types;
  double fraction_sum = 0.0;
  for (const auto& n : corpus) {
    ++r.n_narratives;
    r.n_steps_total += n.steps.size();
    for (const auto& s : n.steps) {
      r.n_words_total += s.tokens.size();
      types.insert(s.tokens.begin(), s.tokens.end());
    }
    const auto uwf = unique_word_fraction(n);
    fraction_sum += uwf.mean;
    r.n_empty_steps += uwf.empty_steps.size();
  }
  r.avg_steps = static_cast<double>(r.n_steps_total) / static_cast<double>(r.n_narratives);
  r.avg_words_per_step = static_cast<double>(r.n_words_total) / static_cast<double>(r.n_steps_total);
  r.vocab_size = types.size();
  r.avg_unique_word_fraction = fraction_sum / static_cast<double>(r.n_narratives);
  return r;
}

inline nlohmann::json to_json(const StatsReport& r) {
  return {{"n_narratives", r.n_narratives},
          {"n_steps_total", r.n_steps_total},
          {"n_words_total", r.n_words_total},
          {"avg_steps", r.avg_steps},
          {"avg_words_per_step", r.avg_words_per_step},
          {"vocab_size", r.vocab_size},
          {"avg_unique_word_fraction", r.avg_unique_word_fraction},
          {"n_empty_steps", r.n_empty_steps}};
}

}  // namespace narrative_infill::corpus
