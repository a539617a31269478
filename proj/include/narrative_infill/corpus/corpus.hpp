#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "narrative_infill/corpus/feature_file.hpp"
#include "narrative_infill/corpus/tokenize.hpp"
#include "narrative_infill/error.hpp"

namespace narrative_infill::corpus {

enum class FeatureSource { file, inline_array, synthetic };

struct Step {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<float> feature;
  FeatureSource feature_source = FeatureSource::inline_array;
  // Set when feature_source == file; kept so the corpus can be written back.
  std::string feature_file;
};

struct Narrative {
  std::string id;
  std::string category;
  std::vector<Step> steps;

  std::size_t feature_dim() const { return steps.empty() ? 0 : steps.front().feature.size(); }
};

using Corpus = std::vector<Narrative>;

enum class CorpusFormat { jsonl };

inline Step make_step(std::string text, std::vector<float> feature,
                      FeatureSource source = FeatureSource::inline_array) {
  Step step;
  step.tokens = tokenize(text);
  step.text = std::move(text);
  step.feature = std::move(feature);
  step.feature_source = source;
  return step;
}

namespace detail {

inline Narrative parse_record(const nlohmann::json& record, const std::filesystem::path& base_dir,
                              std::size_t line_no) {
  auto fail = [&](const std::string& what) {
    return InputError("line " + std::to_string(line_no) + ": " + what);
  };
  if (!record.is_object()) throw fail("record is not a JSON object");
  if (!record.contains("id") || !record["id"].is_string()) throw fail("missing string field 'id'");
  if (!record.contains("steps") || !record["steps"].is_array()) {
    throw fail("missing array field 'steps'");
  }
  Narrative narrative;
  narrative.id = record["id"].get<std::string>();
  if (record.contains("category")) {
    if (!record["category"].is_string()) throw fail("field 'category' is not a string");
    narrative.category = record["category"].get<std::string>();
  }
  for (const auto& s : record["steps"]) {
    if (!s.is_object() || !s.contains("text") || !s["text"].is_string()) {
      throw fail("step without string field 'text' in narrative " + narrative.id);
    }
    Step step;
    step.text = s["text"].get<std::string>();
    step.tokens = tokenize(step.text);
    if (s.contains("feature")) {
      if (!s["feature"].is_array()) throw fail("'feature' is not an array in narrative " + narrative.id);
      step.feature.reserve(s["feature"].size());
      for (const auto& v : s["feature"]) {
        if (!v.is_number()) throw fail("non-numeric feature value in narrative " + narrative.id);
        step.feature.push_back(v.get<float>());
      }
      step.feature_source = FeatureSource::inline_array;
    } else if (s.contains("feature_file") && s["feature_file"].is_string()) {
      step.feature_file = s["feature_file"].get<std::string>();
      std::filesystem::path fp = step.feature_file;
      if (fp.is_relative()) fp = base_dir / fp;
      try {
        step.feature = read_feature_file(fp);
      } catch (const InputError& e) {
        throw InputError("narrative " + narrative.id + ": " + e.what());
      }
      step.feature_source = FeatureSource::file;
    } else {
      throw fail("step has neither 'feature' nor 'feature_file' in narrative " + narrative.id);
    }
    narrative.steps.push_back(std::move(step));
  }
  if (narrative.steps.empty()) throw fail("narrative " + narrative.id + " has no steps");
  return narrative;
}

}  // namespace detail

// One narrative per non-blank line. Feature files resolve relative to the
// corpus file's directory. All steps of all narratives must share one
// feature dimension (the first step read declares it).
inline Corpus load_corpus(const std::filesystem::path& path,
                          CorpusFormat format = CorpusFormat::jsonl) {
  (void)format;
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus " + path.string());
  const auto base_dir = path.parent_path();
  Corpus corpus;
  std::optional<std::size_t> dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    auto narrative = detail::parse_record(record, base_dir, line_no);
    for (const auto& step : narrative.steps) {
      if (!dim) dim = step.feature.size();
      if (step.feature.size() != *dim || *dim == 0) {
        throw InputError("narrative " + narrative.id + ": feature dimension " +
                         std::to_string(step.feature.size()) + " does not match corpus dimension " +
                         std::to_string(*dim));
      }
    }
    corpus.push_back(std::move(narrative));
  }
  return corpus;
}

inline nlohmann::json narrative_to_json(const Narrative& narrative) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& step : narrative.steps) {
    nlohmann::json s;
    s["text"] = step.text;
    if (step.feature_source == FeatureSource::file && !step.feature_file.empty()) {
      s["feature_file"] = step.feature_file;
    } else {
      s["feature"] = step.feature;
    }
    steps.push_back(std::move(s));
  }
  return {{"id", narrative.id}, {"category", narrative.category}, {"steps", std::move(steps)}};
}

// Features are always written inline unless they came from a file and
// `keep_feature_files` is set (paths are then written unchanged).
inline void save_corpus(const std::filesystem::path& path, const Corpus& corpus,
                        bool keep_feature_files = false) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write corpus " + path.string());
  for (const auto& narrative : corpus) {
    auto record = narrative_to_json(narrative);
    if (!keep_feature_files) {
      for (std::size_t k = 0; k < narrative.steps.size(); ++k) {
        auto& s = record["steps"][k];
        if (s.contains("feature_file")) {
          s.erase("feature_file");
          s["feature"] = narrative.steps[k].feature;
        }
      }
    }
    out << record.dump() << '\n';
  }
}

}  // namespace narrative_infill::corpus
