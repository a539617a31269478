#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "narrative_infill/corpus/encode.hpp"
#include "narrative_infill/corpus/vocabulary.hpp"
#include "narrative_infill/error.hpp"
#include "narrative_infill/infer/beam_search.hpp"
#include "narrative_infill/model/infill_model.hpp"
#include "narrative_infill/model/masking.hpp"
#include "narrative_infill/nn/graph.hpp"
#include "narrative_infill/run/threads.hpp"

namespace narrative_infill::infer {

// Decoder distribution for one step conditioned on its global feature.
template <typename T>
class DecoderScorer {
 public:
  using State = std::vector<T>;  // decoder hidden state

  DecoderScorer(const nn::ParameterSet<T>& params, std::span<const T> global_k)
      : params_(params), global_(global_k.begin(), global_k.end()) {}

  State start() {
    nn::Graph<T> g(false);
    const auto m = model::bind(g, params_);
    const auto gk = g.constant(1, global_.size(), global_);
    const auto h0 = model::decoder_initial_state(g, m, gk);
    return step(g, m, h0, corpus::kBos);
  }

  State advance(const State& h, TokenId token) {
    nn::Graph<T> g(false);
    const auto m = model::bind(g, params_);
    return step(g, m, g.constant(1, h.size(), h), token);
  }

  std::vector<double> log_probs(const State& h) {
    nn::Graph<T> g(false);
    const auto m = model::bind(g, params_);
    const auto logits = g.linear(g.constant(1, h.size(), h), m.out_w, m.out_b);
    const std::size_t v = g.cols(logits);
    std::vector<T> probs(v);
    const T lse = nn::Graph<T>::softmax_row(g.data(logits), probs.data(), v);
    std::vector<double> out(v);
    for (std::size_t i = 0; i < v; ++i) out[i] = static_cast<double>(g.data(logits)[i] - lse);
    return out;
  }

 private:
  State step(nn::Graph<T>& g, const model::ModelVars& m, nn::Var h, TokenId token) {
    const TokenId ids[1] = {token};
    const auto x = g.embedding(m.embed, std::span<const TokenId>(ids));
    const auto next = nn::gru_cell(g, x, h, m.dec);
    return State(g.values(next).begin(), g.values(next).end());
  }

  const nn::ParameterSet<T>& params_;
  std::vector<T> global_;
};

struct GeneratedNarrative {
  std::string narrative_id;
  std::optional<std::size_t> infill_index;
  std::vector<std::vector<TokenId>> steps;
  std::vector<double> log_probs;
  std::vector<bool> truncated;
};

struct GenerateOptions {
  std::size_t beam = 3;
  std::size_t max_len = 42;
};

// Global features for every step, computed once with optional masking.
template <typename T>
nn::Matrix<T> narrative_globals(const nn::ParameterSet<T>& params, const nn::Matrix<T>& features,
                                const model::MaskPlan& plan) {
  nn::Graph<T> g(false);
  const auto m = model::bind(g, params);
  const auto enc = model::encode_narrative_context(g, m, g.constant(model::apply_mask(features, plan)));
  return g.matrix(enc.globals);
}

// Each step is decoded independently from its own global feature. With an
// infill index, that step's features are zeroed before encoding.
template <typename T>
GeneratedNarrative generate_narrative(const nn::ParameterSet<T>& params, const nn::Matrix<T>& features,
                                      const GenerateOptions& options,
                                      std::optional<std::size_t> infill_index = std::nullopt,
                                      std::string narrative_id = {}) {
  if (features.rows == 0) throw InputError("generate_narrative: no steps");
  if (infill_index && *infill_index >= features.rows) {
    throw InputError("infill index " + std::to_string(*infill_index) + " out of range for " +
                     std::to_string(features.rows) + " steps");
  }
  model::MaskPlan plan;
  if (infill_index) plan = model::MaskPlan::of({*infill_index});
  const auto globals = narrative_globals(params, features, plan);

  BeamOptions beam;
  beam.beam = options.beam;
  beam.max_len = options.max_len;
  beam.banned = {corpus::kPad, corpus::kBos};

  GeneratedNarrative out;
  out.narrative_id = std::move(narrative_id);
  out.infill_index = infill_index;
  for (std::size_t k = 0; k < globals.rows; ++k) {
    DecoderScorer<T> scorer(params, globals.row(k));
    auto r = beam_search(scorer, beam);
    out.steps.push_back(std::move(r.tokens));
    out.log_probs.push_back(r.log_prob);
    out.truncated.push_back(r.truncated);
  }
  return out;
}

// The unmasked generation first, then one per infill index 0..n-1.
template <typename T>
std::vector<GeneratedNarrative> infill_sweep(const nn::ParameterSet<T>& params, const nn::Matrix<T>& features,
                                             const GenerateOptions& options, const std::string& narrative_id = {},
                                             std::size_t threads = 1) {
  if (features.rows == 0) throw InputError("infill_sweep: no steps");
  std::vector<GeneratedNarrative> out(features.rows + 1);
  run::parallel_for(out.size(), threads, [&](std::size_t i) {
    const auto index = i == 0 ? std::nullopt : std::optional<std::size_t>(i - 1);
    out[i] = generate_narrative(params, features, options, index, narrative_id);
  });
  return out;
}

inline nlohmann::json to_json(const GeneratedNarrative& g, const corpus::Vocabulary& vocab) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : g.steps) steps.push_back(corpus::join_tokens(corpus::decode_tokens(s, vocab)));
  nlohmann::json j;
  j["narrative_id"] = g.narrative_id;
  j["infill_index"] = g.infill_index ? nlohmann::json(*g.infill_index) : nlohmann::json(nullptr);
  j["steps"] = std::move(steps);
  j["log_probs"] = g.log_probs;
  return j;
}

}  // namespace narrative_infill::infer
