#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "narrative_infill/error.hpp"
#include "narrative_infill/nn/parameters.hpp"

namespace narrative_infill::nn {

template <typename T>
struct OptimizerState {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  static OptimizerState for_parameters(const ParameterSet<T>& params, double lr = 4e-4,
                                       double beta1 = 0.9, double beta2 = 0.999,
                                       double eps = 1e-8) {
    OptimizerState s;
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    for (const auto& p : params) {
      s.first_moment.emplace_back(p.value.size(), T{0});
      s.second_moment.emplace_back(p.value.size(), T{0});
    }
    return s;
  }
};

template <typename T>
double global_grad_norm(const ParameterSet<T>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (const T g : p.grad) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

// Rescales all gradients by max_norm / norm when the global L2 norm exceeds
// max_norm. Returns the norm measured before clipping.
template <typename T>
double clip_gradients(ParameterSet<T>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
      for (T& g : p.grad) g *= s;
    }
  }
  return norm;
}

// Adam with bias correction, using params[i].grad as the gradient.
template <typename T>
void adam_step(ParameterSet<T>& params, OptimizerState<T>& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match parameter set");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != p.value.size() || v.size() != p.value.size()) {
      throw ShapeError("adam_step: moment shape mismatch for " + p.name);
    }
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const T g = p.grad[j];
      m[j] = b1 * m[j] + (T{1} - b1) * g;
      v[j] = b2 * v[j] + (T{1} - b2) * g * g;
      const double m_hat = static_cast<double>(m[j]) / c1;
      const double v_hat = static_cast<double>(v[j]) / c2;
      p.value[j] -= static_cast<T>(state.lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

}  // namespace narrative_infill::nn
