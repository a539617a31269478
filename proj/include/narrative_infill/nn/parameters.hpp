#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "narrative_infill/error.hpp"
#include "narrative_infill/rng.hpp"

namespace narrative_infill::nn {

// A named trainable tensor. `shape` is the declared shape (1 or 2 dims);
// it is viewed as rows x cols, with vectors as a single row.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> value;
  std::vector<T> grad;
};

template <typename T>
class ParameterSet {
 public:
  std::size_t add(const std::string& name, std::vector<std::size_t> shape) {
    if (index_.count(name)) throw InputError("duplicate parameter name " + name);
    if (shape.empty() || shape.size() > 2) throw ShapeError("parameter " + name + " must be 1-D or 2-D");
    Parameter<T> p;
    p.name = name;
    p.rows = shape.size() == 2 ? shape[0] : 1;
    p.cols = shape.back();
    p.shape = std::move(shape);
    p.value.assign(p.rows * p.cols, T{0});
    p.grad.assign(p.rows * p.cols, T{0});
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InputError("unknown parameter " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T{0});
  }

  // Matrices uniform(-scale, scale); 1-D parameters (biases) zero.
  void init_uniform(Rng& rng, double scale) {
    for (auto& p : params_) {
      if (p.shape.size() == 1) {
        std::fill(p.value.begin(), p.value.end(), T{0});
      } else {
        for (auto& v : p.value) v = static_cast<T>(rng.uniform(-scale, scale));
      }
    }
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : params_) {
      const auto i = out.add(p.name, p.shape);
      std::transform(p.value.begin(), p.value.end(), out[i].value.begin(),
                     [](T v) { return static_cast<U>(v); });
    }
    return out;
  }

  bool same_values(const ParameterSet& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (params_[i].name != other[i].name || params_[i].value != other[i].value) return false;
    }
    return true;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace narrative_infill::nn
