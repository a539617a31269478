#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "narrative_infill/corpus/encode.hpp"
#include "narrative_infill/model/infill_model.hpp"
#include "narrative_infill/model/masking.hpp"
#include "narrative_infill/nn/gradcheck.hpp"
#include "narrative_infill/nn/graph.hpp"
#include "narrative_infill/nn/gru.hpp"
#include "narrative_infill/rng.hpp"

namespace narrative_infill::run {

struct GradCheckCase {
  std::string name;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  std::size_t n_checked = 0;
  bool passed() const { return max_relative_error < tolerance; }
};

inline constexpr double kPolynomialTolerance = 1e-8;
inline constexpr double kSmoothTolerance = 1e-4;
inline constexpr double kGradCheckEps = 1e-5;

namespace detail {

inline nn::Matrix<double> random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  nn::Matrix<double> m(r, c);
  for (auto& v : m.data) v = rng.uniform(-scale, scale);
  return m;
}

// sum(out * weights) with fixed random weights, so every output coordinate
// gets a distinct upstream gradient.
inline nn::Var project(nn::Graph<double>& g, nn::Var out, std::uint64_t seed) {
  Rng rng(seed);
  const auto w = random_matrix(rng, g.rows(out), g.cols(out));
  return g.sum(g.mul(out, g.constant(w)));
}

// A fixed two-step toy narrative over a vocabulary of 7 ids.
inline corpus::EncodedNarrative toy_narrative(std::size_t n_steps, std::size_t d_img, Rng& rng) {
  corpus::EncodedNarrative enc;
  enc.id = "toy";
  enc.n_steps = n_steps;
  enc.feature_dim = d_img;
  enc.row_width = 6;
  for (std::size_t i = 0; i < n_steps * d_img; ++i) enc.features.push_back(static_cast<float>(rng.uniform(-1, 1)));
  enc.token_ids.assign(n_steps * enc.row_width, corpus::kPad);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const std::size_t len = 1 + (k % 3);
    auto* row = enc.token_ids.data() + k * enc.row_width;
    row[0] = corpus::kBos;
    for (std::size_t i = 0; i < len; ++i) row[i + 1] = static_cast<corpus::TokenId>(4 + (k + i) % 3);
    row[len + 1] = corpus::kEos;
    enc.step_lengths.push_back(len);
  }
  return enc;
}

}  // namespace detail

// Finite-difference checks for every differentiable op and for the full
// narrative loss under XE, V-Infill and two-step masking.
inline std::vector<GradCheckCase> run_gradient_suite(std::uint64_t seed = 7) {
  using nn::Graph;
  using nn::Var;
  using Inputs = std::span<const Var>;
  Rng rng(seed);
  std::vector<GradCheckCase> cases;
  auto check = [&](const std::string& name, double tol, const nn::ScalarFn& fn,
                   std::vector<nn::Matrix<double>> inputs) {
    const auto r = nn::gradient_check(fn, std::move(inputs), kGradCheckEps);
    cases.push_back({name, r.max_relative_error, tol, r.n_checked});
  };
  auto m = [&](std::size_t r, std::size_t c) { return detail::random_matrix(rng, r, c); };

  check("add", kPolynomialTolerance,
        [](Graph<double>& g, Inputs v) { return detail::project(g, g.add(v[0], v[1]), 1); }, {m(3, 4), m(3, 4)});
  check("add(row broadcast)", kPolynomialTolerance,
        [](Graph<double>& g, Inputs v) { return detail::project(g, g.add(v[0], v[1]), 2); }, {m(3, 4), m(1, 4)});
  check("sub", kPolynomialTolerance,
        [](Graph<double>& g, Inputs v) { return detail::project(g, g.sub(v[0], v[1]), 3); }, {m(2, 3), m(2, 3)});
  check("mul", kPolynomialTolerance,
        [](Graph<double>& g, Inputs v) { return detail::project(g, g.mul(v[0], v[1]), 4); }, {m(3, 3), m(3, 3)});
  check("scale/one_minus", kPolynomialTolerance,
        [](Graph<double>& g, Inputs v) { return detail::project(g, g.one_minus(g.scale(v[0], 1.7)), 5); },
        {m(2, 5)});
  check("matmul", kPolynomialTolerance,
        [](Graph<double>& g, Inputs v) { return detail::project(g, g.matmul(v[0], v[1]), 6); }, {m(3, 4), m(4, 2)});
  check("linear", kPolynomialTolerance,
        [](Graph<double>& g, Inputs v) { return detail::project(g, g.linear(v[0], v[1], v[2]), 7); },
        {m(3, 4), m(5, 4), m(1, 5)});
  check("concat/slice", kPolynomialTolerance,
        [](Graph<double>& g, Inputs v) {
          const Var c = g.concat_cols({v[0], v[1]});
          const Var r = g.concat_rows({c, g.slice_rows(c, 1, 1)});
          return detail::project(g, r, 8);
        },
        {m(2, 3), m(2, 2)});
  check("embedding", kPolynomialTolerance,
        [](Graph<double>& g, Inputs v) {
          const corpus::TokenId ids[] = {2, 0, 2, 4};
          return detail::project(g, g.embedding(v[0], std::span<const corpus::TokenId>(ids)), 9);
        },
        {m(5, 3)});
  check("zero_rows", kPolynomialTolerance,
        [](Graph<double>& g, Inputs v) {
          const std::size_t rows[] = {1};
          return detail::project(g, g.zero_rows(v[0], rows), 10);
        },
        {m(3, 4)});
  check("dropout(train, fixed stream)", kPolynomialTolerance,
        [](Graph<double>& g, Inputs v) {
          Rng r(99);
          return detail::project(g, g.dropout(v[0], 0.2, r, true), 11);
        },
        {m(4, 4)});
  check("sigmoid", kSmoothTolerance,
        [](Graph<double>& g, Inputs v) { return detail::project(g, g.sigmoid(v[0]), 12); }, {m(3, 4)});
  check("tanh", kSmoothTolerance,
        [](Graph<double>& g, Inputs v) { return detail::project(g, g.tanh(v[0]), 13); }, {m(3, 4)});
  check("softmax", kSmoothTolerance,
        [](Graph<double>& g, Inputs v) { return detail::project(g, g.softmax(v[0]), 14); }, {m(3, 5)});
  check("cross_entropy", kSmoothTolerance,
        [](Graph<double>& g, Inputs v) {
          const corpus::TokenId t[] = {1, 0, 4, 2};
          return g.cross_entropy(v[0], std::span<const corpus::TokenId>(t), corpus::kPad);
        },
        {m(4, 5)});

  // GRU cell composed with cross entropy.
  {
    nn::ParameterSet<double> p;
    nn::add_gru_parameters(p, "cell", 3, 4);
    std::vector<nn::Matrix<double>> inputs = {m(2, 3), m(2, 4)};
    for (const auto& q : p) inputs.push_back(detail::random_matrix(rng, q.rows, q.cols, 0.5));
    check("gru_cell + cross_entropy", kSmoothTolerance,
          [](Graph<double>& g, Inputs v) {
            const auto cell = nn::GruVars::from(&v[2]);
            const corpus::TokenId t[] = {3, 1};
            return g.cross_entropy(nn::gru_cell(g, v[0], v[1], cell), std::span<const corpus::TokenId>(t),
                                   corpus::kPad);
          },
          inputs);
  }
  // BiGRU.
  {
    nn::ParameterSet<double> p;
    nn::add_gru_parameters(p, "f", 3, 2);
    nn::add_gru_parameters(p, "b", 3, 3);
    std::vector<nn::Matrix<double>> inputs = {m(4, 3)};
    for (const auto& q : p) inputs.push_back(detail::random_matrix(rng, q.rows, q.cols, 0.5));
    check("bigru", kSmoothTolerance,
          [](Graph<double>& g, Inputs v) {
            return detail::project(g, nn::bigru(g, v[0], nn::GruVars::from(&v[1]), nn::GruVars::from(&v[10])), 15);
          },
          inputs);
  }

  // End-to-end narrative loss: features plus every model parameter.
  const model::ModelDims dims{4, 3, 4, 3, 7};
  const auto params = model::make_parameters<double>(dims);
  std::vector<nn::Matrix<double>> param_values;
  for (const auto& q : params) param_values.push_back(detail::random_matrix(rng, q.rows, q.cols, 0.8));

  auto model_case = [&](const std::string& name, std::size_t n_steps, model::MaskPlan plan) {
    Rng data_rng(seed + n_steps);
    const auto enc = detail::toy_narrative(n_steps, dims.d_img, data_rng);
    std::vector<nn::Matrix<double>> inputs = {model::feature_matrix<double>(enc)};
    inputs.insert(inputs.end(), param_values.begin(), param_values.end());
    check(name, kSmoothTolerance,
          [enc, plan](Graph<double>& g, Inputs v) {
            const auto mv = model::ModelVars::from(v.subspan(1));
            return model::narrative_loss(g, mv, v[0], enc, plan).loss;
          },
          std::move(inputs));
  };
  model_case("decoder (2-step toy narrative)", 2, {});
  model_case("narrative loss XE", 3, {});
  model_case("narrative loss V-Infill", 3, model::MaskPlan::of({1}));
  model_case("narrative loss two masked steps", 4, model::MaskPlan::of({0, 2}));
  return cases;
}

}  // namespace narrative_infill::run
