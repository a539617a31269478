#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "narrative_infill/corpus/corpus.hpp"
#include "narrative_infill/corpus/vocabulary.hpp"
#include "narrative_infill/error.hpp"

namespace narrative_infill::corpus {

struct EncodedNarrative {
  std::string id;
  std::size_t n_steps = 0;
  std::size_t feature_dim = 0;
  // n_steps x feature_dim, row-major.
  std::vector<float> features;
  // n_steps rows of width max_words + 2: BOS, ids..., EOS, PAD...
  std::size_t row_width = 0;
  std::vector<TokenId> token_ids;
  std::vector<std::size_t> step_lengths;

  const TokenId* row(std::size_t k) const { return token_ids.data() + k * row_width; }
  const float* feature_row(std::size_t k) const { return features.data() + k * feature_dim; }
};

inline std::vector<TokenId> encode_tokens(const std::vector<std::string>& tokens,
                                          const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

// Drops specials other than UNK; stops at the first EOS.
inline std::vector<std::string> decode_tokens(const std::vector<TokenId>& ids,
                                              const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  for (const TokenId id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    tokens.push_back(vocab.token(id));
  }
  return tokens;
}

// Keeps the first max_steps steps and the first max_words tokens of each.
inline EncodedNarrative encode_narrative(const Narrative& narrative, const Vocabulary& vocab,
                                         std::size_t max_steps, std::size_t max_words) {
  if (narrative.steps.empty()) throw InputError("narrative " + narrative.id + " has no steps");
  if (max_steps == 0) throw InputError("max_steps must be positive");
  EncodedNarrative enc;
  enc.id = narrative.id;
  enc.n_steps = std::min(narrative.steps.size(), max_steps);
  enc.feature_dim = narrative.feature_dim();
  enc.row_width = max_words + 2;
  enc.features.reserve(enc.n_steps * enc.feature_dim);
  enc.token_ids.assign(enc.n_steps * enc.row_width, kPad);
  for (std::size_t k = 0; k < enc.n_steps; ++k) {
    const auto& step = narrative.steps[k];
    if (step.feature.size() != enc.feature_dim) {
      throw InputError("narrative " + narrative.id + ": inconsistent feature dimension");
    }
    enc.features.insert(enc.features.end(), step.feature.begin(), step.feature.end());
    const std::size_t len = std::min(step.tokens.size(), max_words);
    TokenId* row = enc.token_ids.data() + k * enc.row_width;
    row[0] = kBos;
    for (std::size_t i = 0; i < len; ++i) row[i + 1] = vocab.id(step.tokens[i]);
    row[len + 1] = kEos;
    enc.step_lengths.push_back(len);
  }
  return enc;
}

inline std::vector<EncodedNarrative> encode_corpus(const Corpus& corpus, const Vocabulary& vocab,
                                                   std::size_t max_steps, std::size_t max_words) {
  std::vector<EncodedNarrative> out;
  out.reserve(corpus.size());
  for (const auto& n : corpus) out.push_back(encode_narrative(n, vocab, max_steps, max_words));
  return out;
}

}  // namespace narrative_infill::corpus
