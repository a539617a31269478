#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "narrative_infill/error.hpp"
#include "narrative_infill/nn/graph.hpp"
#include "narrative_infill/nn/matrix.hpp"

namespace narrative_infill::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t n_checked = 0;
};

// Builds a scalar from the given input handles on the graph.
using ScalarFn = std::function<Var(Graph<double>&, std::span<const Var>)>;

// Central differences per coordinate against reverse-mode gradients.
// Relative error: |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckResult gradient_check(const ScalarFn& fn, std::vector<Matrix<double>> inputs,
                                      double eps = 1e-5) {
  auto evaluate = [&](bool recording, std::vector<Matrix<double>>* grads) {
    Graph<double> g(recording);
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& m : inputs) vars.push_back(g.variable(m));
    const Var out = fn(g, vars);
    const double value = g.scalar(out);
    if (grads) {
      g.backward(out);
      grads->clear();
      for (auto v : vars) grads->push_back(g.grad(v));
    }
    return value;
  };

  std::vector<Matrix<double>> analytic;
  const double f0 = evaluate(true, &analytic);
  if (evaluate(false, nullptr) != f0) {
    throw NumericError("gradient_check: unreliable check, repeated forward passes disagree");
  }

  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double saved = inputs[i].data[j];
      inputs[i].data[j] = saved + eps;
      const double plus = evaluate(false, nullptr);
      inputs[i].data[j] = saved - eps;
      const double minus = evaluate(false, nullptr);
      inputs[i].data[j] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[i].data[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
      ++result.n_checked;
    }
  }
  return result;
}

}  // namespace narrative_infill::nn
