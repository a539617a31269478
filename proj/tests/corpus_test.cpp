#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "narrative_infill/corpus/corpus.hpp"
#include "narrative_infill/corpus/encode.hpp"
#include "narrative_infill/corpus/feature_file.hpp"
#include "narrative_infill/corpus/split.hpp"
#include "narrative_infill/corpus/stats.hpp"
#include "narrative_infill/corpus/tokenize.hpp"
#include "narrative_infill/corpus/vocabulary.hpp"
#include "narrative_infill/rng.hpp"
#include "test_util.hpp"

using namespace narrative_infill;
using namespace narrative_infill::corpus;
using narrative_infill::testing::TempDir;

namespace {

Narrative narrative_of(std::vector<std::string> texts, std::string id = "n", std::size_t dim = 2) {
  Narrative n;
  n.id = std::move(id);
  n.category = "stories";
  for (auto& t : texts) n.steps.push_back(make_step(t, std::vector<float>(dim, 0.5f)));
  return n;
}

using Strings = std::vector<std::string>;

}  // namespace

TEST(Tokenize, LowercasesAndSplitsPunctuation) {
  EXPECT_EQ(tokenize("Heat the Oil."), (Strings{"heat", "the", "oil", "."}));
  EXPECT_EQ(tokenize(""), Strings{});
  EXPECT_EQ(tokenize("a  b"), (Strings{"a", "b"}));
  EXPECT_EQ(tokenize("salt,pepper!\tDone"), (Strings{"salt", ",", "pepper", "!", "done"}));
}

TEST(LoadCorpus, PreservesRecordOrder) {
  TempDir dir;
  const auto path = dir.write("c.jsonl",
                              R"({"id": "b", "category": "stories", "steps": [{"text": "x", "feature": [1, 2]}]})"
                              "\n"
                              R"({"id": "a", "category": "stories", "steps": [{"text": "y", "feature": [3, 4]}]})"
                              "\n");
  const auto corpus = load_corpus(path);
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_EQ(corpus[0].id, "b");
  EXPECT_EQ(corpus[1].id, "a");
  EXPECT_EQ(corpus[1].steps[0].feature, (std::vector<float>{3, 4}));
}

TEST(LoadCorpus, InlineFeaturesFiveSteps) {
  TempDir dir;
  std::string steps;
  for (int k = 0; k < 5; ++k) {
    if (k) steps += ",";
    steps += R"({"text": "step )" + std::to_string(k) + R"(", "feature": [0.1, 0.2, 0.3, 0.4]})";
  }
  const auto path = dir.write("c.jsonl", R"({"id": "r1", "category": "recipes", "steps": [)" + steps + "]}\n");
  const auto corpus = load_corpus(path);
  ASSERT_EQ(corpus.size(), 1u);
  EXPECT_EQ(corpus[0].steps.size(), 5u);
  EXPECT_EQ(corpus[0].feature_dim(), 4u);
}

TEST(LoadCorpus, ReadsFeatureFilesRelativeToCorpus) {
  TempDir dir;
  write_feature_file(dir / "f0.nif", std::vector<float>{1.5f, -2.0f, 0.25f});
  const auto path = dir.write("c.jsonl", R"({"id": "n", "category": "x", "steps": [{"text": "a", "feature_file": "f0.nif"}]})" "\n");
  const auto corpus = load_corpus(path);
  EXPECT_EQ(corpus[0].steps[0].feature, (std::vector<float>{1.5f, -2.0f, 0.25f}));
  EXPECT_EQ(corpus[0].steps[0].feature_source, FeatureSource::file);
}

TEST(LoadCorpus, MissingFeatureFileNamesNarrative) {
  TempDir dir;
  const auto path = dir.write("c.jsonl", R"({"id": "story-42", "category": "x", "steps": [{"text": "a", "feature_file": "nope.nif"}]})" "\n");
  try {
    load_corpus(path);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("story-42"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, MalformedRecordNamesLine) {
  TempDir dir;
  const auto path = dir.write("c.jsonl",
                              R"({"id": "a", "category": "x", "steps": [{"text": "a", "feature": [1]}]})" "\n"
                              "\n"
                              "{not json\n");
  try {
    load_corpus(path);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, DimensionMismatchNamesNarrative) {
  TempDir dir;
  const auto path = dir.write("c.jsonl",
                              R"({"id": "a", "category": "x", "steps": [{"text": "a", "feature": [1, 2]}]})" "\n"
                              R"({"id": "odd-one", "category": "x", "steps": [{"text": "a", "feature": [1, 2, 3]}]})" "\n");
  try {
    load_corpus(path);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("odd-one"), std::string::npos) << e.what();
  }
}

TEST(FeatureFile, LittleEndianLayout) {
  TempDir dir;
  write_feature_file(dir / "f.nif", std::vector<float>{1.0f});
  const auto bytes = narrative_infill::testing::read_file(dir / "f.nif");
  ASSERT_EQ(bytes.size(), 12u);
  EXPECT_EQ(bytes.substr(0, 4), "NIF1");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));
  // 1.0f = 0x3f800000
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x00\x00\x80\x3f", 4));
}

TEST(FeatureFile, RejectsBadMagic) {
  TempDir dir;
  const auto p = dir.write("bad.nif", "NOPE\x01\x00\x00\x00\x00\x00\x80\x3f");
  EXPECT_THROW(read_feature_file(p), InputError);
}

TEST(Vocabulary, FrequencyThreshold) {
  Corpus c = {narrative_of({"a a b", "a"})};
  const auto v = build_vocabulary(c, 2, 100);
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.id("a"), 4u);
  EXPECT_EQ(v.id("b"), kUnk);
  EXPECT_EQ(v.token(kPad), "<pad>");
  EXPECT_EQ(v.token(kEos), "<eos>");
}

TEST(Vocabulary, SpecialsOnlyBudget) {
  Corpus c = {narrative_of({"a b c"})};
  const auto v = build_vocabulary(c, 1, 4);
  EXPECT_EQ(v.size(), 4u);
  for (const auto& t : {"a", "b", "c"}) EXPECT_EQ(v.id(t), kUnk);
}

TEST(Vocabulary, LexicographicTieBreak) {
  Corpus c = {narrative_of({"b a", "a b", "c"})};
  const auto v = build_vocabulary(c, 1, 100);
  EXPECT_EQ(v.id("a"), 4u);
  EXPECT_EQ(v.id("b"), 5u);
  EXPECT_EQ(v.id("c"), 6u);
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  TempDir dir;
  Corpus c = {narrative_of({"heat the oil .", "stir the pot"})};
  const auto v = build_vocabulary(c, 1, 100);
  v.save(dir / "vocab.txt");
  const auto w = Vocabulary::load(dir / "vocab.txt");
  EXPECT_EQ(v.tokens(), w.tokens());
}

TEST(Vocabulary, EmptyCorpusIsAnError) { EXPECT_THROW(build_vocabulary({}, 1, 10), InputError); }

TEST(Encode, KeepsFirstStepsOnly) {
  std::vector<std::string> texts;
  for (int k = 0; k < 9; ++k) texts.push_back("w" + std::to_string(k));
  const auto n = narrative_of(texts);
  const auto v = build_vocabulary({n}, 1, 100);
  const auto enc = encode_narrative(n, v, 5, 4);
  ASSERT_EQ(enc.n_steps, 5u);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(enc.row(k)[1], v.id("w" + std::to_string(k)));
}

TEST(Encode, ShortNarrativeHasNoPhantomSteps) {
  const auto n = narrative_of({"a", "b", "c"});
  const auto enc = encode_narrative(n, build_vocabulary({n}, 1, 100), 5, 4);
  EXPECT_EQ(enc.n_steps, 3u);
  EXPECT_EQ(enc.token_ids.size(), 3u * 6u);
  EXPECT_EQ(enc.features.size(), 3u * 2u);
}

TEST(Encode, OutOfVocabularyBecomesUnk) {
  Vocabulary v;
  const auto x = v.add("x");
  const auto n = narrative_of({"x y"});
  const auto enc = encode_narrative(n, v, 5, 4);
  const std::vector<TokenId> expected = {kBos, x, kUnk, kEos, kPad, kPad};
  EXPECT_EQ(std::vector<TokenId>(enc.row(0), enc.row(0) + 6), expected);
  EXPECT_EQ(enc.step_lengths[0], 2u);
}

TEST(Encode, TruncatesWords) {
  const auto n = narrative_of({"a b c d e f"});
  const auto enc = encode_narrative(n, build_vocabulary({n}, 1, 100), 5, 3);
  EXPECT_EQ(enc.row_width, 5u);
  EXPECT_EQ(enc.step_lengths[0], 3u);
  EXPECT_EQ(enc.row(0)[4], kEos);
}

// decode(encode(tokens)) restores in-vocabulary tokens and maps the rest to UNK.
TEST(Encode, RoundTripProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    Vocabulary v;
    std::vector<std::string> pool;
    for (int i = 0; i < 12; ++i) pool.push_back("t" + std::to_string(i));
    for (int i = 0; i < 6; ++i) v.add(pool[rng.uniform_int(pool.size())]);
    std::vector<std::string> tokens;
    const auto len = rng.uniform_int(10);
    for (std::size_t i = 0; i < len; ++i) tokens.push_back(pool[rng.uniform_int(pool.size())]);
    const auto decoded = decode_tokens(encode_tokens(tokens, v), v);
    ASSERT_EQ(decoded.size(), tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      EXPECT_EQ(decoded[i], v.contains(tokens[i]) ? tokens[i] : "<unk>");
    }
  }
}

TEST(Split, EightyTenTen) {
  Corpus c;
  for (int i = 0; i < 100; ++i) c.push_back(narrative_of({"a"}, "n" + std::to_string(i)));
  const auto s = split_corpus(c, {0.8, 0.1, 0.1}, 3);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.val.size(), 10u);
  EXPECT_EQ(s.test.size(), 10u);
}

TEST(Split, SingleNarrativeGoesToTest) {
  const auto s = split_corpus({narrative_of({"a"})}, {0.8, 0.1, 0.1}, 3);
  EXPECT_EQ(s.train.size(), 0u);
  EXPECT_EQ(s.val.size(), 0u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, DeterministicForSeed) {
  EXPECT_EQ(split_indices(50, {}, 9), split_indices(50, {}, 9));
  EXPECT_NE(split_indices(50, {}, 9), split_indices(50, {}, 10));
}

TEST(Split, Errors) {
  EXPECT_THROW(split_indices(0, {}, 1), InputError);
  EXPECT_THROW(split_indices(10, {0.5, 0.5, 0.5}, 1), InputError);
}

TEST(Split, DisjointExactCoverProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(300);
    const double train = rng.uniform(0.0, 1.0);
    const double val = rng.uniform(0.0, 1.0 - train);
    const auto parts = split_indices(n, {train, val, 1.0 - train - val}, rng.next_u64());
    std::vector<std::size_t> all;
    for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), n);
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(all[i], i);
  }
}

TEST(UniqueWordFraction, HandExamples) {
  auto f = unique_word_fraction(narrative_of({"a b", "a c"}));
  EXPECT_EQ(f.per_step, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(f.mean, 0.5);
  EXPECT_EQ(unique_word_fraction(narrative_of({"a b"})).per_step, std::vector<double>{1.0});
  EXPECT_EQ(unique_word_fraction(narrative_of({"a", "a"})).per_step, (std::vector<double>{0.0, 0.0}));
}

TEST(UniqueWordFraction, EmptyStepIsFlagged) {
  const auto f = unique_word_fraction(narrative_of({"a b", ""}));
  EXPECT_EQ(f.per_step, (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(f.empty_steps, std::vector<std::size_t>{1});
}

TEST(UniqueWordFraction, PermutationCovariant) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> texts;
    const auto n = 1 + rng.uniform_int(6);
    for (std::size_t k = 0; k < n; ++k) {
      std::string t;
      for (std::size_t i = 0, len = 1 + rng.uniform_int(5); i < len; ++i) t += "w" + std::to_string(rng.uniform_int(8)) + " ";
      texts.push_back(t);
    }
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<std::string> permuted;
    for (auto p : perm) permuted.push_back(texts[p]);
    const auto a = unique_word_fraction(narrative_of(texts));
    const auto b = unique_word_fraction(narrative_of(permuted));
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(b.per_step[i], a.per_step[perm[i]]);
  }
}

TEST(CorpusStats, HandExamples) {
  const auto one = corpus_stats({narrative_of({"x y z"})});
  EXPECT_EQ(one.avg_steps, 1.0);
  EXPECT_EQ(one.avg_words_per_step, 3.0);
  const auto two = corpus_stats({narrative_of({"a", "b"}), narrative_of({"a", "b", "c", "d"})});
  EXPECT_EQ(two.avg_steps, 3.0);
  EXPECT_EQ(two.n_steps_total, 6u);
  EXPECT_EQ(two.vocab_size, 4u);
  EXPECT_THROW(corpus_stats({}), InputError);
}

// Stats of a concatenation combine the parts weighted by step counts.
TEST(CorpusStats, ConcatenationProperty) {
  Rng rng(8);
  auto random_corpus = [&] {
    Corpus c;
    for (std::size_t i = 0, n = 1 + rng.uniform_int(5); i < n; ++i) {
      std::vector<std::string> texts;
      for (std::size_t k = 0, s = 1 + rng.uniform_int(4); k < s; ++k) {
        std::string t;
        for (std::size_t w = 0, len = 1 + rng.uniform_int(6); w < len; ++w) t += "w" + std::to_string(rng.uniform_int(10)) + " ";
        texts.push_back(t);
      }
      c.push_back(narrative_of(texts));
    }
    return c;
  };
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_corpus();
    const auto b = random_corpus();
    Corpus ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    const auto sa = corpus_stats(a), sb = corpus_stats(b), sab = corpus_stats(ab);
    EXPECT_EQ(sab.n_steps_total, sa.n_steps_total + sb.n_steps_total);
    const double words = sa.avg_words_per_step * static_cast<double>(sa.n_steps_total) +
                         sb.avg_words_per_step * static_cast<double>(sb.n_steps_total);
    EXPECT_NEAR(sab.avg_words_per_step, words / static_cast<double>(sab.n_steps_total), 1e-12);
    EXPECT_NEAR(sab.avg_steps, static_cast<double>(sab.n_steps_total) / static_cast<double>(ab.size()), 1e-12);
    const double uwf = (sa.avg_unique_word_fraction * static_cast<double>(a.size()) +
                        sb.avg_unique_word_fraction * static_cast<double>(b.size())) /
                       static_cast<double>(ab.size());
    EXPECT_NEAR(sab.avg_unique_word_fraction, uwf, 1e-12);
  }
}
