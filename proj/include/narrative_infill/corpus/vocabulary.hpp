#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "narrative_infill/corpus/corpus.hpp"
#include "narrative_infill/error.hpp"

namespace narrative_infill::corpus {

using TokenId = std::uint32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kNumSpecials = 4;

class Vocabulary {
 public:
  Vocabulary() : id_to_token_{"<pad>", "<bos>", "<eos>", "<unk>"} {
    for (TokenId i = 0; i < kNumSpecials; ++i) token_to_id_.emplace(id_to_token_[i], i);
  }

  std::size_t size() const { return id_to_token_.size(); }

  TokenId add(const std::string& token) {
    auto [it, inserted] = token_to_id_.emplace(token, static_cast<TokenId>(id_to_token_.size()));
    if (inserted) id_to_token_.push_back(token);
    return it->second;
  }

  TokenId id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }

  const std::string& token(TokenId id) const {
    if (id >= id_to_token_.size()) throw InputError("token id out of range: " + std::to_string(id));
    return id_to_token_[id];
  }

  const std::vector<std::string>& tokens() const { return id_to_token_; }

  // One token per line, in id order. Specials included.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write vocabulary " + path.string());
    for (const auto& t : id_to_token_) out << t << '\n';
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open vocabulary " + path.string());
    Vocabulary vocab;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      if (line_no < kNumSpecials) {
        if (line != vocab.id_to_token_[line_no]) {
          throw InputError("vocabulary " + path.string() + ": special token mismatch on line " +
                           std::to_string(line_no + 1));
        }
      } else if (vocab.add(line) != line_no) {
        throw InputError("vocabulary " + path.string() + ": duplicate token '" + line + "'");
      }
      ++line_no;
    }
    if (line_no < kNumSpecials) throw InputError("vocabulary " + path.string() + " is truncated");
    return vocab;
  }

 private:
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Tokens with count >= min_freq, ordered by (count desc, token asc), capped
// so that the total size including the four specials is at most max_size.
inline Vocabulary build_vocabulary(const Corpus& corpus, std::size_t min_freq,
                                   std::size_t max_size) {
  if (corpus.empty()) throw InputError("cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& narrative : corpus) {
    for (const auto& step : narrative.steps) {
      for (const auto& t : step.tokens) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [token, count] : counts) {
    if (count >= min_freq) ranked.emplace_back(token, count);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const std::size_t budget = max_size > kNumSpecials ? max_size - kNumSpecials : 0;
  if (ranked.size() > budget) ranked.resize(budget);
  Vocabulary vocab;
  for (const auto& [token, count] : ranked) vocab.add(token);
  return vocab;
}

}  // namespace narrative_infill::corpus
