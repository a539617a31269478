#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <vector>

#include "narrative_infill/corpus/vocabulary.hpp"
#include "narrative_infill/error.hpp"

namespace narrative_infill::infer {

using corpus::TokenId;

// A next-token distribution source. `start()` is the state after BOS,
// `log_probs(s)` the distribution over the vocabulary in state s, and
// `advance(s, t)` the state after also consuming t.
template <typename S>
concept StepScorer = requires(S& s, const typename S::State& st, TokenId t) {
  typename S::State;
  { s.start() } -> std::convertible_to<typename S::State>;
  { s.log_probs(st) } -> std::convertible_to<std::vector<double>>;
  { s.advance(st, t) } -> std::convertible_to<typename S::State>;
};

struct BeamOptions {
  std::size_t beam = 3;
  // Maximum number of generated tokens, EOS included.
  std::size_t max_len = 42;
  TokenId eos = corpus::kEos;
  // Never emitted (e.g. PAD and BOS for surface text).
  std::vector<TokenId> banned;
};

struct BeamHypothesis {
  std::vector<TokenId> tokens;  // generated tokens after BOS; ends with EOS when finished
  double log_prob = 0.0;
  bool finished = false;
};

struct BeamResult {
  std::vector<TokenId> tokens;  // without the trailing EOS
  double log_prob = 0.0;
  // No kept hypothesis emitted EOS within max_len.
  bool truncated = false;
};

// Higher log-prob first; ties go to the lexicographically smaller sequence.
inline bool better(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

// Length-capped beam search without length normalization. Hypotheses that
// emit EOS stay in the beam, keep their score and occupy a slot. The result
// is the best finished hypothesis in the final beam, or the best unfinished
// one (flagged truncated) if none finished. beam == 1 is greedy decoding.
template <StepScorer Scorer>
BeamResult beam_search(Scorer& scorer, const BeamOptions& options) {
  if (options.beam == 0) throw InputError("beam size must be >= 1");
  if (options.max_len == 0) throw InputError("max_len must be >= 1");
  using State = typename Scorer::State;

  struct Entry {
    BeamHypothesis hyp;
    State state;
  };
  struct Candidate {
    BeamHypothesis hyp;
    std::size_t parent;  // index into beam, or npos for carried finished entries
    std::size_t carried;
  };
  constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  std::vector<Entry> beam;
  beam.push_back({BeamHypothesis{}, scorer.start()});

  for (std::size_t len = 0; len < options.max_len; ++len) {
    const bool all_finished =
        std::all_of(beam.begin(), beam.end(), [](const Entry& e) { return e.hyp.finished; });
    if (all_finished) break;

    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < beam.size(); ++i) {
      const auto& e = beam[i];
      if (e.hyp.finished) {
        candidates.push_back({e.hyp, npos, i});
        continue;
      }
      const std::vector<double> lp = scorer.log_probs(e.state);
      for (TokenId t = 0; t < lp.size(); ++t) {
        if (std::find(options.banned.begin(), options.banned.end(), t) != options.banned.end()) continue;
        Candidate c{e.hyp, i, npos};
        c.hyp.tokens.push_back(t);
        c.hyp.log_prob += lp[t];
        c.hyp.finished = t == options.eos;
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(options.beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                      [](const Candidate& a, const Candidate& b) { return better(a.hyp, b.hyp); });

    const bool last = len + 1 == options.max_len;
    std::vector<Entry> next;
    next.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
      auto& c = candidates[i];
      if (c.parent == npos) {
        next.push_back(std::move(beam[c.carried]));
      } else if (c.hyp.finished || last) {
        next.push_back({std::move(c.hyp), beam[c.parent].state});
      } else {
        State s = scorer.advance(beam[c.parent].state, c.hyp.tokens.back());
        next.push_back({std::move(c.hyp), std::move(s)});
      }
    }
    beam = std::move(next);
  }

  const Entry* best = nullptr;
  for (const auto& e : beam) {
    if (e.hyp.finished && (!best || better(e.hyp, best->hyp))) best = &e;
  }
  BeamResult result;
  if (best) {
    result.tokens.assign(best->hyp.tokens.begin(), best->hyp.tokens.end() - 1);
    result.log_prob = best->hyp.log_prob;
    return result;
  }
  for (const auto& e : beam) {
    if (!best || better(e.hyp, best->hyp)) best = &e;
  }
  result.tokens = best->hyp.tokens;
  result.log_prob = best->hyp.log_prob;
  result.truncated = true;
  return result;
}

// Argmax at every position until EOS or max_len; ties go to the lower id.
template <StepScorer Scorer>
BeamResult greedy_decode(Scorer& scorer, const BeamOptions& options) {
  BeamResult result;
  auto state = scorer.start();
  for (std::size_t len = 0; len < options.max_len; ++len) {
    const auto lp = scorer.log_probs(state);
    std::size_t best = lp.size();
    for (std::size_t t = 0; t < lp.size(); ++t) {
      const bool banned =
          std::find(options.banned.begin(), options.banned.end(), t) != options.banned.end();
      if (!banned && (best == lp.size() || lp[t] > lp[best])) best = t;
    }
    if (best == lp.size()) throw InputError("greedy_decode: every token is banned");
    result.log_prob += lp[best];
    if (best == options.eos) return result;
    result.tokens.push_back(static_cast<TokenId>(best));
    if (len + 1 < options.max_len) state = scorer.advance(state, static_cast<TokenId>(best));
  }
  result.truncated = true;
  return result;
}

}  // namespace narrative_infill::infer
