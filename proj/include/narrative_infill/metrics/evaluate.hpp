#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "narrative_infill/corpus/corpus.hpp"
#include "narrative_infill/corpus/tokenize.hpp"
#include "narrative_infill/error.hpp"
#include "narrative_infill/metrics/bleu.hpp"
#include "narrative_infill/metrics/meteor.hpp"
#include "narrative_infill/metrics/rouge.hpp"

namespace narrative_infill::metrics {

// One line of a generations file, with step texts re-tokenized.
struct GenerationRecord {
  std::string narrative_id;
  std::optional<std::size_t> infill_index;
  std::vector<Tokens> steps;
  std::vector<double> log_probs;
};

inline std::vector<GenerationRecord> load_generations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open generations " + path.string());
  std::vector<GenerationRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& what) {
      return InputError(path.string() + ":" + std::to_string(line_no) + ": " + what);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw fail("malformed JSON");
    }
    if (!j.is_object() || !j.contains("narrative_id") || !j["narrative_id"].is_string() ||
        !j.contains("steps") || !j["steps"].is_array()) {
      throw fail("expected {narrative_id, infill_index, steps, log_probs}");
    }
    GenerationRecord r;
    r.narrative_id = j["narrative_id"].get<std::string>();
    if (j.contains("infill_index") && !j["infill_index"].is_null()) {
      if (!j["infill_index"].is_number_unsigned()) throw fail("infill_index must be a non-negative integer");
      r.infill_index = j["infill_index"].get<std::size_t>();
    }
    for (const auto& s : j["steps"]) {
      if (!s.is_string()) throw fail("steps must be strings");
      r.steps.push_back(corpus::tokenize(s.get<std::string>()));
    }
    if (j.contains("log_probs") && j["log_probs"].is_array()) {
      for (const auto& v : j["log_probs"]) r.log_probs.push_back(v.get<double>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

struct MetricScores {
  double bleu[4] = {0, 0, 0, 0};
  double rouge_l = 0.0;
  double meteor_lite = 0.0;
  std::size_t n_pairs = 0;
  double avg_generated_length = 0.0;
};

enum class ScoringUnit { narrative, step };

struct MetricReport {
  MetricScores overall;
  ScoringUnit unit = ScoringUnit::narrative;
  // Keyed by infill index; std::nullopt is the unmasked generation.
  std::map<std::optional<std::size_t>, MetricScores> by_infill_index;
};

inline MetricScores score_pairs(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
                                double avg_generated_length) {
  MetricScores s;
  for (std::size_t n = 1; n <= 4; ++n) s.bleu[n - 1] = bleu_n(hyps, refs, n);
  s.rouge_l = rouge_l(hyps, refs);
  s.meteor_lite = meteor_lite(hyps, refs);
  s.n_pairs = hyps.size();
  s.avg_generated_length = avg_generated_length;
  return s;
}

// Pairs each generation with its reference narrative, truncated to the
// generated step count. In narrative units the steps are concatenated into
// one hypothesis/reference pair; in step units every step is a pair.
inline MetricReport evaluate_run(const std::vector<GenerationRecord>& generations,
                                 const corpus::Corpus& references,
                                 ScoringUnit unit = ScoringUnit::narrative) {
  if (generations.empty()) throw InputError("evaluate: no generations");
  std::unordered_map<std::string, const corpus::Narrative*> by_id;
  for (const auto& n : references) by_id.emplace(n.id, &n);
  std::string missing;
  for (const auto& g : generations) {
    if (!by_id.count(g.narrative_id)) missing += (missing.empty() ? "" : ", ") + g.narrative_id;
  }
  if (!missing.empty()) throw InputError("evaluate: no reference for narrative ids: " + missing);

  struct Bucket {
    std::vector<Tokens> hyps, refs;
    std::size_t generated_tokens = 0;
    std::size_t narratives = 0;
  };
  Bucket all;
  std::map<std::optional<std::size_t>, Bucket> buckets;
  const bool stratify = std::any_of(generations.begin(), generations.end(),
                                    [](const auto& g) { return g.infill_index.has_value(); });

  for (const auto& g : generations) {
    const auto& ref = *by_id.at(g.narrative_id);
    if (g.steps.size() > ref.steps.size()) {
      throw InputError("evaluate: narrative " + g.narrative_id + " has more generated steps than reference steps");
    }
    std::vector<Tokens> hyps, refs;
    if (unit == ScoringUnit::narrative) {
      Tokens h, r;
      for (std::size_t k = 0; k < g.steps.size(); ++k) {
        h.insert(h.end(), g.steps[k].begin(), g.steps[k].end());
        r.insert(r.end(), ref.steps[k].tokens.begin(), ref.steps[k].tokens.end());
      }
      hyps.push_back(std::move(h));
      refs.push_back(std::move(r));
    } else {
      for (std::size_t k = 0; k < g.steps.size(); ++k) {
        hyps.push_back(g.steps[k]);
        refs.push_back(ref.steps[k].tokens);
      }
    }
    std::size_t length = 0;
    for (const auto& s : g.steps) length += s.size();
    for (Bucket* b : {&all, stratify ? &buckets[g.infill_index] : nullptr}) {
      if (!b) continue;
      b->hyps.insert(b->hyps.end(), hyps.begin(), hyps.end());
      b->refs.insert(b->refs.end(), refs.begin(), refs.end());
      b->generated_tokens += length;
      ++b->narratives;
    }
  }
  auto finish = [](const Bucket& b) {
    return score_pairs(b.hyps, b.refs,
                       static_cast<double>(b.generated_tokens) / static_cast<double>(b.narratives));
  };
  MetricReport report;
  report.unit = unit;
  report.overall = finish(all);
  for (const auto& [index, bucket] : buckets) report.by_infill_index[index] = finish(bucket);
  return report;
}

inline double percent_2dp(double x) { return std::round(x * 10000.0) / 100.0; }

inline nlohmann::json to_json(const MetricScores& s) {
  nlohmann::json scaled = {{"bleu1", percent_2dp(s.bleu[0])}, {"bleu2", percent_2dp(s.bleu[1])},
                           {"bleu3", percent_2dp(s.bleu[2])}, {"bleu4", percent_2dp(s.bleu[3])},
                           {"meteor_lite", percent_2dp(s.meteor_lite)}, {"rouge_l", percent_2dp(s.rouge_l)}};
  nlohmann::json raw = {{"bleu1", s.bleu[0]}, {"bleu2", s.bleu[1]}, {"bleu3", s.bleu[2]},
                        {"bleu4", s.bleu[3]}, {"meteor_lite", s.meteor_lite}, {"rouge_l", s.rouge_l}};
  return {{"scores", std::move(scaled)},
          {"raw", std::move(raw)},
          {"n_pairs", s.n_pairs},
          {"avg_generated_length", s.avg_generated_length}};
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j = to_json(r.overall);
  j["unit"] = r.unit == ScoringUnit::narrative ? "narrative" : "step";
  j["meteor_variant"] = "meteor-lite (exact + suffix-stem matching, no synonyms)";
  if (!r.by_infill_index.empty()) {
    nlohmann::json by = nlohmann::json::object();
    for (const auto& [index, scores] : r.by_infill_index) {
      by[index ? std::to_string(*index) : std::string("none")] = to_json(scores);
    }
    j["by_infill_index"] = std::move(by);
  }
  return j;
}

}  // namespace narrative_infill::metrics
