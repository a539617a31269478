#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "narrative_infill/corpus/corpus.hpp"
#include "narrative_infill/error.hpp"
#include "narrative_infill/rng.hpp"

namespace narrative_infill::synth {

struct SynthOptions {
  std::size_t n_narratives = 100;
  std::size_t n_steps = 5;
  std::size_t vocab_size = 200;
  std::size_t d_img = 64;
  std::uint64_t seed = 1;
  // Fraction of each step's words drawn from a narrative-wide shared set.
  double overlap = 0.6;
  std::size_t min_words = 8;
  std::size_t max_words = 12;
  // Standard deviation of the per-step feature noise.
  double noise = 0.1;
};

// Deterministic pronounceable word for an index; always ends in a vowel.
inline std::string pseudo_word(std::size_t index) {
  static constexpr char kConsonants[] = "bdfgklmnprtvz";
  static constexpr char kVowels[] = "aeiou";
  constexpr std::size_t kSyllables = 13 * 5;
  auto syllable = [](std::size_t i) {
    return std::string{kConsonants[i / 5], kVowels[i % 5]};
  };
  std::string w = syllable(index % kSyllables);
  index /= kSyllables;
  w += syllable(index % kSyllables);
  index /= kSyllables;
  while (index > 0) {
    w += syllable(index % kSyllables);
    index /= kSyllables;
  }
  return w;
}

// Fixed random direction in feature space for a word.
inline std::vector<double> word_direction(std::uint64_t seed, std::size_t word, std::size_t dim) {
  Rng rng(derive_seed(seed, 0x776f7264, word));
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal() / std::sqrt(static_cast<double>(dim));
  return v;
}

// Template narratives. The vocabulary is split into a topic pool (a quarter,
// cut into topic groups) and a content pool. Each narrative picks a topic
// and a length L, then a shared set of round(overlap * L) topic words used in
// every step, followed by L - |shared| content words unique to the step.
// A step's feature is the normalized sum of its words' directions plus
// Gaussian noise, so features carry the step's content.
inline corpus::Corpus generate_corpus(const SynthOptions& o) {
  if (o.n_narratives == 0 || o.n_steps == 0 || o.vocab_size == 0 || o.d_img == 0) {
    throw InputError("synth: counts must be >= 1");
  }
  if (o.min_words == 0 || o.min_words > o.max_words) throw InputError("synth: need 1 <= min_words <= max_words");
  if (o.overlap < 0.0 || o.overlap > 1.0) throw InputError("synth: overlap must be in [0, 1]");

  const auto shared_max = static_cast<std::size_t>(std::lround(o.overlap * static_cast<double>(o.max_words)));
  std::size_t topic_pool = std::max<std::size_t>(o.vocab_size / 4, std::min(o.vocab_size, shared_max + 1));
  if (shared_max == 0) topic_pool = 0;
  topic_pool = std::min(topic_pool, o.vocab_size);
  const std::size_t content_pool = o.vocab_size - topic_pool;
  const std::size_t topic_size = shared_max == 0 ? 0 : std::max<std::size_t>(shared_max + 1, std::min<std::size_t>(topic_pool, 2 * shared_max));
  const std::size_t n_topics = topic_size == 0 ? 1 : std::max<std::size_t>(1, topic_pool / topic_size);

  std::vector<std::vector<double>> directions(o.vocab_size);
  for (std::size_t w = 0; w < o.vocab_size; ++w) directions[w] = word_direction(o.seed, w, o.d_img);

  corpus::Corpus out;
  Rng rng(derive_seed(o.seed, 0x73796e74));
  for (std::size_t n = 0; n < o.n_narratives; ++n) {
    const std::size_t length = o.min_words + static_cast<std::size_t>(rng.uniform_int(o.max_words - o.min_words + 1));
    const auto n_shared = std::min(static_cast<std::size_t>(std::lround(o.overlap * static_cast<double>(length))), length);
    const std::size_t n_content = length - n_shared;

    std::vector<std::size_t> shared;
    if (n_shared > 0) {
      const std::size_t topic = static_cast<std::size_t>(rng.uniform_int(n_topics));
      const std::size_t begin = content_pool + topic * topic_size;
      const std::size_t end = std::min(o.vocab_size, begin + topic_size);
      std::vector<std::size_t> words(end - begin);
      std::iota(words.begin(), words.end(), begin);
      rng.shuffle(words);
      words.resize(std::min(n_shared, words.size()));
      shared = std::move(words);
    }

    // Content words without replacement across the narrative while the pool lasts.
    std::vector<std::size_t> content_order(content_pool);
    std::iota(content_order.begin(), content_order.end(), std::size_t{0});
    rng.shuffle(content_order);
    std::size_t cursor = 0;

    corpus::Narrative narrative;
    narrative.id = "synth-" + std::to_string(n);
    narrative.category = "synthetic";
    for (std::size_t k = 0; k < o.n_steps; ++k) {
      std::vector<std::size_t> words = shared;
      for (std::size_t c = 0; c < n_content && content_pool > 0; ++c) {
        if (cursor == content_order.size()) {
          rng.shuffle(content_order);
          cursor = 0;
        }
        words.push_back(content_order[cursor++]);
      }
      std::string text;
      std::vector<double> feature(o.d_img, 0.0);
      for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) text.push_back(' ');
        text += pseudo_word(words[i]);
        for (std::size_t d = 0; d < o.d_img; ++d) feature[d] += directions[words[i]][d];
      }
      const double norm = std::sqrt(static_cast<double>(std::max<std::size_t>(words.size(), 1)));
      std::vector<float> f(o.d_img);
      for (std::size_t d = 0; d < o.d_img; ++d) {
        f[d] = static_cast<float>(feature[d] / norm * std::sqrt(static_cast<double>(o.d_img)) + o.noise * rng.normal());
      }
      narrative.steps.push_back(corpus::make_step(std::move(text), std::move(f), corpus::FeatureSource::synthetic));
    }
    out.push_back(std::move(narrative));
  }
  return out;
}

}  // namespace narrative_infill::synth
