#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "narrative_infill/corpus/encode.hpp"
#include "narrative_infill/corpus/vocabulary.hpp"
#include "narrative_infill/error.hpp"
#include "narrative_infill/model/config.hpp"
#include "narrative_infill/model/masking.hpp"
#include "narrative_infill/nn/graph.hpp"
#include "narrative_infill/nn/gru.hpp"
#include "narrative_infill/nn/parameters.hpp"
#include "narrative_infill/rng.hpp"

namespace narrative_infill::model {

using corpus::TokenId;
using nn::Graph;
using nn::Var;

struct ModelDims {
  std::size_t d_img = 0;
  std::size_t encoder_hidden = 0;
  std::size_t decoder_hidden = 0;
  std::size_t embed_dim = 0;
  std::size_t vocab_size = 0;

  static ModelDims of(const ModelConfig& c) {
    return {c.d_img, c.encoder_hidden, c.decoder_hidden, c.embed_dim, c.vocab_size};
  }
  bool operator==(const ModelDims&) const = default;
};

// Parameter layout, in registration (and checkpoint) order:
//   proj.w, proj.b            local feature projection d_img -> encoder_hidden
//   enc_fwd.*, enc_bwd.*      narrative context BiGRU
//   init.w, init.b            global feature -> decoder initial state
//   embed                     vocab x embed_dim
//   dec.*                     decoder GRU
//   out.w, out.b              decoder state -> vocabulary logits
template <typename T>
nn::ParameterSet<T> make_parameters(const ModelDims& d) {
  nn::ParameterSet<T> p;
  p.add("proj.w", {d.encoder_hidden, d.d_img});
  p.add("proj.b", {d.encoder_hidden});
  nn::add_gru_parameters(p, "enc_fwd", d.encoder_hidden, d.encoder_hidden);
  nn::add_gru_parameters(p, "enc_bwd", d.encoder_hidden, d.encoder_hidden);
  p.add("init.w", {d.decoder_hidden, 2 * d.encoder_hidden});
  p.add("init.b", {d.decoder_hidden});
  p.add("embed", {d.vocab_size, d.embed_dim});
  nn::add_gru_parameters(p, "dec", d.embed_dim, d.decoder_hidden);
  p.add("out.w", {d.vocab_size, d.decoder_hidden});
  p.add("out.b", {d.vocab_size});
  return p;
}

// Reads the dimensions back from parameter shapes and checks the layout.
template <typename T>
ModelDims infer_dims(const nn::ParameterSet<T>& p) {
  ModelDims d;
  const auto& proj = p[p.index("proj.w")];
  const auto& embed = p[p.index("embed")];
  const auto& dec = p[p.index("dec.u_z")];
  d.encoder_hidden = proj.rows;
  d.d_img = proj.cols;
  d.vocab_size = embed.rows;
  d.embed_dim = embed.cols;
  d.decoder_hidden = dec.rows;
  const auto expected = make_parameters<T>(d);
  if (expected.size() != p.size()) throw InputError("parameter set does not match the model layout");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (expected[i].name != p[i].name || expected[i].shape != p[i].shape) {
      throw InputError("parameter " + p[i].name + " does not match the model layout");
    }
  }
  return d;
}

struct ModelVars {
  Var proj_w, proj_b;
  nn::GruVars enc_fwd, enc_bwd;
  Var init_w, init_b;
  Var embed;
  nn::GruVars dec;
  Var out_w, out_b;

  // From handles in make_parameters order.
  static ModelVars from(std::span<const Var> v) {
    if (v.size() != 34) throw ShapeError("ModelVars: expected 34 handles, got " + std::to_string(v.size()));
    ModelVars m;
    m.proj_w = v[0];
    m.proj_b = v[1];
    m.enc_fwd = nn::GruVars::from(&v[2]);
    m.enc_bwd = nn::GruVars::from(&v[11]);
    m.init_w = v[20];
    m.init_b = v[21];
    m.embed = v[22];
    m.dec = nn::GruVars::from(&v[23]);
    m.out_w = v[32];
    m.out_b = v[33];
    return m;
  }
};

template <typename T>
ModelVars bind(Graph<T>& g, const nn::ParameterSet<T>& params) {
  std::vector<Var> v;
  v.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) v.push_back(g.parameter(params, i));
  return ModelVars::from(v);
}

struct NarrativeEncoding {
  Var locals;   // n x encoder_hidden
  Var globals;  // n x 2*encoder_hidden
};

// locals = tanh(proj(features)), dropout at train time; globals = BiGRU(locals).
template <typename T>
NarrativeEncoding encode_narrative_context(Graph<T>& g, const ModelVars& m, Var features,
                                          bool training = false, Rng* dropout_rng = nullptr,
                                          double dropout = 0.0) {
  if (g.rows(features) == 0) throw ShapeError("encode_narrative_context: no steps");
  NarrativeEncoding enc;
  enc.locals = g.tanh(g.linear(features, m.proj_w, m.proj_b));
  if (training && dropout > 0.0) {
    if (!dropout_rng) throw InputError("encode_narrative_context: dropout needs an RNG stream");
    enc.locals = g.dropout(enc.locals, dropout, *dropout_rng, true);
  }
  enc.globals = nn::bigru(g, enc.locals, m.enc_fwd, m.enc_bwd);
  return enc;
}

template <typename T>
Var decoder_initial_state(Graph<T>& g, const ModelVars& m, Var globals) {
  return g.tanh(g.linear(globals, m.init_w, m.init_b));
}

struct TeacherForced {
  Var logits;                    // (positions * n_steps) x V, position-major
  std::vector<TokenId> targets;  // one per logits row; PAD rows are ignored
};

// Teacher-forced decoding of every step at once, each conditioned only on
// its own global feature. Row k of `token_rows` is BOS w1 .. wL EOS PAD...;
// position t consumes token t and predicts token t + 1. Positions past the
// longest step are skipped.
template <typename T>
TeacherForced decode_teacher_forced(Graph<T>& g, const ModelVars& m, Var globals,
                                    std::span<const TokenId> token_rows, std::size_t row_width) {
  const std::size_t n = g.rows(globals);
  if (row_width < 2 || token_rows.size() != n * row_width) {
    throw ShapeError("decode_teacher_forced: token rows do not match " + std::to_string(n) + " steps");
  }
  std::size_t positions = 1;
  for (std::size_t k = 0; k < n; ++k) {
    const TokenId* row = token_rows.data() + k * row_width;
    if (row[0] != corpus::kBos) throw InputError("decoder input row does not start with BOS");
    std::size_t last = 0;
    for (std::size_t t = 1; t < row_width; ++t) {
      if (row[t] != corpus::kPad) last = t;
    }
    positions = std::max(positions, last);
  }

  TeacherForced out;
  std::vector<Var> step_logits;
  step_logits.reserve(positions);
  std::vector<TokenId> inputs(n);
  Var h = decoder_initial_state(g, m, globals);
  for (std::size_t t = 0; t < positions; ++t) {
    for (std::size_t k = 0; k < n; ++k) {
      inputs[k] = token_rows[k * row_width + t];
      out.targets.push_back(token_rows[k * row_width + t + 1]);
    }
    const Var x = g.embedding(m.embed, std::span<const TokenId>(inputs));
    h = nn::gru_cell(g, x, h, m.dec);
    step_logits.push_back(g.linear(h, m.out_w, m.out_b));
  }
  out.logits = g.concat_rows(step_logits);
  return out;
}

// Single step: (L x V) logits for a row starting with BOS.
template <typename T>
Var decode_step_teacher_forced(Graph<T>& g, const ModelVars& m, Var global_k,
                               std::span<const TokenId> row) {
  if (g.rows(global_k) != 1) throw ShapeError("decode_step_teacher_forced: expects one global feature row");
  if (row.empty() || row[0] != corpus::kBos) throw InputError("decoder input row does not start with BOS");
  if (row.size() < 2) throw ShapeError("decode_step_teacher_forced: row needs at least two tokens");
  std::vector<Var> logits;
  Var h = decoder_initial_state(g, m, global_k);
  for (std::size_t t = 0; t + 1 < row.size(); ++t) {
    const Var x = g.embedding(m.embed, row.subspan(t, 1));
    h = nn::gru_cell(g, x, h, m.dec);
    logits.push_back(g.linear(h, m.out_w, m.out_b));
  }
  return g.concat_rows(logits);
}

struct NarrativeLoss {
  Var loss;              // mean cross entropy over non-PAD targets
  std::size_t n_tokens;  // number of non-PAD targets
  TeacherForced decoded;
};

// Masks the listed steps' features to zero, encodes, and scores every
// step's text, masked steps included.
template <typename T>
NarrativeLoss narrative_loss(Graph<T>& g, const ModelVars& m, Var features,
                             const corpus::EncodedNarrative& enc, const MaskPlan& plan,
                             bool training = false, Rng* dropout_rng = nullptr,
                             double dropout = 0.0) {
  plan.validate(enc.n_steps);
  if (g.rows(features) != enc.n_steps) throw ShapeError("narrative_loss: feature rows do not match steps");
  const Var masked = plan.empty() ? features : g.zero_rows(features, plan.masked_indices);
  const auto context = encode_narrative_context(g, m, masked, training, dropout_rng, dropout);
  auto decoded = decode_teacher_forced(g, m, context.globals, std::span<const TokenId>(enc.token_ids),
                                       enc.row_width);
  NarrativeLoss out{Var{}, 0, {}};
  for (auto t : decoded.targets) out.n_tokens += t != corpus::kPad;
  out.loss = g.cross_entropy(decoded.logits, std::span<const TokenId>(decoded.targets), corpus::kPad);
  out.decoded = std::move(decoded);
  return out;
}

template <typename T>
nn::Matrix<T> feature_matrix(const corpus::EncodedNarrative& enc) {
  nn::Matrix<T> m(enc.n_steps, enc.feature_dim);
  std::transform(enc.features.begin(), enc.features.end(), m.data.begin(),
                 [](float v) { return static_cast<T>(v); });
  return m;
}

// Fraction of non-PAD targets whose argmax logit is the target, with no
// masking and no dropout.
template <typename T>
double teacher_forced_accuracy(const nn::ParameterSet<T>& params,
                               std::span<const corpus::EncodedNarrative> data) {
  std::size_t correct = 0, total = 0;
  for (const auto& enc : data) {
    Graph<T> g(false);
    const auto m = bind(g, params);
    const auto result = narrative_loss(g, m, g.constant(feature_matrix<T>(enc)), enc, MaskPlan{});
    const auto& d = result.decoded;
    const std::size_t v = g.cols(d.logits);
    const T* logits = g.data(d.logits);
    for (std::size_t i = 0; i < d.targets.size(); ++i) {
      if (d.targets[i] == corpus::kPad) continue;
      const T* row = logits + i * v;
      const auto best = static_cast<std::size_t>(std::max_element(row, row + v) - row);
      correct += best == d.targets[i];
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace narrative_infill::model
