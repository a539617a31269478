#pragma once

#include <string>
#include <vector>

#include "narrative_infill/nn/graph.hpp"
#include "narrative_infill/nn/parameters.hpp"

namespace narrative_infill::nn {

// Registers the nine tensors of one GRU cell under `prefix`:
// w_{z,r,h} (hidden x input), u_{z,r,h} (hidden x hidden), b_{z,r,h} (hidden).
// Returns the index of the first; the rest follow in that order.
template <typename T>
std::size_t add_gru_parameters(ParameterSet<T>& set, const std::string& prefix, std::size_t input,
                               std::size_t hidden) {
  const std::size_t first = set.add(prefix + ".w_z", {hidden, input});
  set.add(prefix + ".w_r", {hidden, input});
  set.add(prefix + ".w_h", {hidden, input});
  set.add(prefix + ".u_z", {hidden, hidden});
  set.add(prefix + ".u_r", {hidden, hidden});
  set.add(prefix + ".u_h", {hidden, hidden});
  set.add(prefix + ".b_z", {hidden});
  set.add(prefix + ".b_r", {hidden});
  set.add(prefix + ".b_h", {hidden});
  return first;
}

struct GruVars {
  Var w_z, w_r, w_h;
  Var u_z, u_r, u_h;
  Var b_z, b_r, b_h;

  // From nine consecutive handles in add_gru_parameters order.
  static GruVars from(const Var* v) { return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]}; }
};

template <typename T>
GruVars bind_gru(Graph<T>& g, const ParameterSet<T>& set, std::size_t first) {
  Var v[9];
  for (std::size_t i = 0; i < 9; ++i) v[i] = g.parameter(set, first + i);
  return GruVars::from(v);
}

template <typename T>
void check_gru(const Graph<T>& g, Var x, Var h, const GruVars& p) {
  const std::size_t hidden = g.rows(p.u_z);
  if (g.cols(x) != g.cols(p.w_z) || g.cols(h) != hidden || g.rows(x) != g.rows(h) ||
      g.rows(p.w_z) != hidden) {
    throw ShapeError("gru_cell: input " + shape_string(g.rows(x), g.cols(x)) + " and hidden " +
                     shape_string(g.rows(h), g.cols(h)) + " do not fit w " +
                     shape_string(g.rows(p.w_z), g.cols(p.w_z)) + " / u " +
                     shape_string(hidden, g.cols(p.u_z)));
  }
}

// One GRU step over a batch of rows:
//   z  = sigmoid(W_z x + U_z h + b_z)
//   r  = sigmoid(W_r x + U_r h + b_r)
//   h~ = tanh(W_h x + U_h (r * h) + b_h)
//   h' = (1 - z) * h + z * h~
template <typename T>
Var gru_cell(Graph<T>& g, Var x, Var h, const GruVars& p) {
  check_gru(g, x, h, p);
  const Var z = g.sigmoid(g.add(g.linear(x, p.w_z, p.b_z), g.linear(h, p.u_z)));
  const Var r = g.sigmoid(g.add(g.linear(x, p.w_r, p.b_r), g.linear(h, p.u_r)));
  const Var candidate = g.tanh(g.add(g.linear(x, p.w_h, p.b_h), g.linear(g.mul(r, h), p.u_h)));
  return g.add(g.mul(g.one_minus(z), h), g.mul(z, candidate));
}

// Bidirectional GRU over the rows of `seq` (n x input). Both directions
// start from a zero state. Row k of the result is [forward_k, backward_k].
template <typename T>
Var bigru(Graph<T>& g, Var seq, const GruVars& fwd, const GruVars& bwd) {
  const std::size_t n = g.rows(seq);
  if (n == 0) throw ShapeError("bigru: empty sequence");
  const std::size_t hf = g.rows(fwd.u_z);
  const std::size_t hb = g.rows(bwd.u_z);
  std::vector<Var> rows(n);
  for (std::size_t k = 0; k < n; ++k) rows[k] = g.slice_rows(seq, k, 1);

  std::vector<Var> forward(n), backward(n);
  Var h = g.constant(1, hf, std::vector<T>(hf, T{0}));
  for (std::size_t k = 0; k < n; ++k) forward[k] = h = gru_cell(g, rows[k], h, fwd);
  h = g.constant(1, hb, std::vector<T>(hb, T{0}));
  for (std::size_t k = n; k-- > 0;) backward[k] = h = gru_cell(g, rows[k], h, bwd);

  std::vector<Var> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = g.concat_cols({forward[k], backward[k]});
  return g.concat_rows(out);
}

}  // namespace narrative_infill::nn
