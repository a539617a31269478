#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "narrative_infill/error.hpp"
#include "narrative_infill/nn/matrix.hpp"
#include "narrative_infill/nn/parameters.hpp"
#include "narrative_infill/rng.hpp"

namespace narrative_infill::nn {

// Handle to a node on a Graph tape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
// sweep over the node list is a valid topological order for backward.
// Every value is a 2-D row-major matrix; scalars are 1x1.
//
// With recording disabled the graph only evaluates: no backward closures are
// stored and backward() is unavailable.
template <typename T>
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // ---- leaves ----

  Var constant(std::size_t rows, std::size_t cols, std::vector<T> values) {
    check_size("constant", rows, cols, values.size());
    return push(rows, cols, std::move(values), false);
  }
  Var constant(const Matrix<T>& m) { return constant(m.rows, m.cols, m.data); }

  Var variable(std::size_t rows, std::size_t cols, std::vector<T> values) {
    check_size("variable", rows, cols, values.size());
    return push(rows, cols, std::move(values), recording_);
  }
  Var variable(const Matrix<T>& m) { return variable(m.rows, m.cols, m.data); }

  // Leaf that reads the parameter's storage in place. The parameter must
  // outlive the graph and must not be modified while the graph is in use.
  Var parameter(const ParameterSet<T>& set, std::size_t index) {
    const auto& p = set[index];
    Node n;
    n.rows = p.rows;
    n.cols = p.cols;
    n.external = p.value.data();
    n.requires_grad = recording_;
    nodes_.push_back(std::move(n));
    const Var v{static_cast<std::uint32_t>(nodes_.size() - 1)};
    bindings_.push_back({v.id, index});
    return v;
  }

  // ---- inspection ----

  std::size_t rows(Var v) const { return node(v).rows; }
  std::size_t cols(Var v) const { return node(v).cols; }
  const T* data(Var v) const { return value_ptr(node(v)); }
  std::span<const T> values(Var v) const { return {data(v), rows(v) * cols(v)}; }
  Matrix<T> matrix(Var v) const {
    return Matrix<T>(rows(v), cols(v), std::vector<T>(values(v).begin(), values(v).end()));
  }
  T scalar(Var v) const {
    if (rows(v) != 1 || cols(v) != 1) {
      throw ShapeError("scalar: expected (1x1), got " + shape_string(rows(v), cols(v)));
    }
    return data(v)[0];
  }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // Gradient of the last backward() target w.r.t. v; zeros if v is unused.
  Matrix<T> grad(Var v) const {
    const auto& n = node(v);
    if (n.grad.empty()) return Matrix<T>(n.rows, n.cols);
    return Matrix<T>(n.rows, n.cols, n.grad);
  }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    const bool broadcast = rows(b) == 1 && rows(a) != 1 && cols(a) == cols(b);
    if (!broadcast && (rows(a) != rows(b) || cols(a) != cols(b))) shape_mismatch("add", a, b);
    const std::size_t r = rows(a), c = cols(a);
    std::vector<T> out(r * c);
    const T* pa = data(a);
    const T* pb = data(b);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        out[i * c + j] = pa[i * c + j] + pb[broadcast ? j : i * c + j];
      }
    }
    return record(r, c, std::move(out), {a, b}, [a, b, r, c, broadcast](Graph& g, const T* go) {
      if (g.needs(a)) kernels::axpy(T{1}, go, g.grad_buffer(a), r * c);
      if (g.needs(b)) {
        T* gb = g.grad_buffer(b);
        if (broadcast) {
          for (std::size_t i = 0; i < r; ++i) kernels::axpy(T{1}, go + i * c, gb, c);
        } else {
          kernels::axpy(T{1}, go, gb, r * c);
        }
      }
    });
  }

  Var sub(Var a, Var b) {
    require_same("sub", a, b);
    const std::size_t n = rows(a) * cols(a);
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = data(a)[i] - data(b)[i];
    return record(rows(a), cols(a), std::move(out), {a, b}, [a, b, n](Graph& g, const T* go) {
      if (g.needs(a)) kernels::axpy(T{1}, go, g.grad_buffer(a), n);
      if (g.needs(b)) kernels::axpy(T{-1}, go, g.grad_buffer(b), n);
    });
  }

  // Hadamard product.
  Var mul(Var a, Var b) {
    require_same("mul", a, b);
    const std::size_t n = rows(a) * cols(a);
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = data(a)[i] * data(b)[i];
    return record(rows(a), cols(a), std::move(out), {a, b}, [a, b, n](Graph& g, const T* go) {
      const T* pa = g.data(a);
      const T* pb = g.data(b);
      if (g.needs(a)) {
        T* ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * pb[i];
      }
      if (g.needs(b)) {
        T* gb = g.grad_buffer(b);
        for (std::size_t i = 0; i < n; ++i) gb[i] += go[i] * pa[i];
      }
    });
  }

  Var scale(Var a, T s) {
    const std::size_t n = rows(a) * cols(a);
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = s * data(a)[i];
    return record(rows(a), cols(a), std::move(out), {a}, [a, n, s](Graph& g, const T* go) {
      kernels::axpy(s, go, g.grad_buffer(a), n);
    });
  }

  // 1 - a
  Var one_minus(Var a) {
    const std::size_t n = rows(a) * cols(a);
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = T{1} - data(a)[i];
    return record(rows(a), cols(a), std::move(out), {a}, [a, n](Graph& g, const T* go) {
      kernels::axpy(T{-1}, go, g.grad_buffer(a), n);
    });
  }

  Var sigmoid(Var a) {
    const std::size_t n = rows(a) * cols(a);
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T x = data(a)[i];
      // Split by sign so exp never overflows.
      out[i] = x >= 0 ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
    }
    const Var y = record(rows(a), cols(a), std::move(out), {a}, nullptr);
    set_backward(y, [a, y, n](Graph& g, const T* go) {
      const T* py = g.data(y);
      T* ga = g.grad_buffer(a);
      for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * py[i] * (T{1} - py[i]);
    });
    return y;
  }

  Var tanh(Var a) {
    const std::size_t n = rows(a) * cols(a);
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(data(a)[i]);
    const Var y = record(rows(a), cols(a), std::move(out), {a}, nullptr);
    set_backward(y, [a, y, n](Graph& g, const T* go) {
      const T* py = g.data(y);
      T* ga = g.grad_buffer(a);
      for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * (T{1} - py[i] * py[i]);
    });
    return y;
  }

  // Row-wise softmax over the last axis.
  Var softmax(Var a) {
    const std::size_t r = rows(a), c = cols(a);
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i) softmax_row(data(a) + i * c, out.data() + i * c, c);
    const Var y = record(r, c, std::move(out), {a}, nullptr);
    set_backward(y, [a, y, r, c](Graph& g, const T* go) {
      const T* py = g.data(y);
      T* ga = g.grad_buffer(a);
      for (std::size_t i = 0; i < r; ++i) {
        const T d = kernels::dot(go + i * c, py + i * c, c);
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += py[i * c + j] * (go[i * c + j] - d);
      }
    });
    return y;
  }

  // Inverted dropout: kept units are scaled by 1/(1-drop). Identity when
  // not training or drop == 0.
  Var dropout(Var a, double drop, Rng& rng, bool training) {
    if (!training || drop <= 0.0) return a;
    if (drop >= 1.0) throw ShapeError("dropout: drop probability must be < 1");
    const std::size_t n = rows(a) * cols(a);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - drop));
    std::vector<T> mask(n);
    for (auto& m : mask) m = rng.uniform() < drop ? T{0} : keep_scale;
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = data(a)[i] * mask[i];
    return record(rows(a), cols(a), std::move(out), {a},
                  [a, n, mask = std::move(mask)](Graph& g, const T* go) {
                    T* ga = g.grad_buffer(a);
                    for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * mask[i];
                  });
  }

  // Copy of `a` with the listed rows set to exactly zero.
  Var zero_rows(Var a, std::span<const std::size_t> indices) {
    const std::size_t r = rows(a), c = cols(a);
    std::vector<char> masked(r, 0);
    for (auto k : indices) {
      if (k >= r) {
        throw InputError("zero_rows: row index " + std::to_string(k) + " out of range for " +
                         shape_string(r, c));
      }
      masked[k] = 1;
    }
    std::vector<T> out(values(a).begin(), values(a).end());
    for (std::size_t i = 0; i < r; ++i) {
      if (masked[i]) std::fill(out.begin() + i * c, out.begin() + (i + 1) * c, T{0});
    }
    return record(r, c, std::move(out), {a},
                  [a, r, c, masked = std::move(masked)](Graph& g, const T* go) {
                    T* ga = g.grad_buffer(a);
                    for (std::size_t i = 0; i < r; ++i) {
                      if (!masked[i]) kernels::axpy(T{1}, go + i * c, ga + i * c, c);
                    }
                  });
  }

  // ---- linear algebra ----

  // (m x k) * (k x n)
  Var matmul(Var a, Var b) {
    const std::size_t m = rows(a), k = cols(a), n = cols(b);
    if (rows(b) != k) shape_mismatch("matmul", a, b);
    std::vector<T> out(m * n, T{0});
    const T* pa = data(a);
    const T* pb = data(b);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) kernels::axpy(pa[i * k + p], pb + p * n, out.data() + i * n, n);
    }
    return record(m, n, std::move(out), {a, b}, [a, b, m, k, n](Graph& g, const T* go) {
      const T* pa = g.data(a);
      const T* pb = g.data(b);
      if (g.needs(a)) {
        T* ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += kernels::dot(go + i * n, pb + p * n, n);
        }
      }
      if (g.needs(b)) {
        T* gb = g.grad_buffer(b);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) kernels::axpy(pa[i * k + p], go + i * n, gb + p * n, n);
        }
      }
    });
  }

  // x (m x in) times W^T with W (out x in), plus an optional bias row (1 x out).
  Var linear(Var x, Var w, Var b = {}) {
    const std::size_t m = rows(x), in = cols(x), out_dim = rows(w);
    if (cols(w) != in) shape_mismatch("linear", x, w);
    if (b.valid() && (rows(b) != 1 || cols(b) != out_dim)) shape_mismatch("linear(bias)", w, b);
    std::vector<T> out(m * out_dim);
    const T* px = data(x);
    const T* pw = data(w);
    const T* pb = b.valid() ? data(b) : nullptr;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t o = 0; o < out_dim; ++o) {
        out[i * out_dim + o] = kernels::dot(px + i * in, pw + o * in, in) + (pb ? pb[o] : T{0});
      }
    }
    std::vector<Var> parents = {x, w};
    if (b.valid()) parents.push_back(b);
    return record(m, out_dim, std::move(out), parents, [x, w, b, m, in, out_dim](Graph& g, const T* go) {
      const T* px = g.data(x);
      const T* pw = g.data(w);
      if (g.needs(x)) {
        T* gx = g.grad_buffer(x);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t o = 0; o < out_dim; ++o) kernels::axpy(go[i * out_dim + o], pw + o * in, gx + i * in, in);
        }
      }
      if (g.needs(w)) {
        T* gw = g.grad_buffer(w);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t o = 0; o < out_dim; ++o) kernels::axpy(go[i * out_dim + o], px + i * in, gw + o * in, in);
        }
      }
      if (b.valid() && g.needs(b)) {
        T* gb = g.grad_buffer(b);
        for (std::size_t i = 0; i < m; ++i) kernels::axpy(T{1}, go + i * out_dim, gb, out_dim);
      }
    });
  }

  Var sum(Var a) {
    const std::size_t n = rows(a) * cols(a);
    T s{0};
    for (std::size_t i = 0; i < n; ++i) s += data(a)[i];
    return record(1, 1, {s}, {a}, [a, n](Graph& g, const T* go) {
      T* ga = g.grad_buffer(a);
      for (std::size_t i = 0; i < n; ++i) ga[i] += go[0];
    });
  }

  // ---- structure ----

  Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t r = rows(parts[0]);
    std::size_t c = 0;
    for (auto p : parts) {
      if (rows(p) != r) shape_mismatch("concat_cols", parts[0], p);
      c += cols(p);
    }
    std::vector<T> out(r * c);
    std::size_t offset = 0;
    for (auto p : parts) {
      const std::size_t pc = cols(p);
      for (std::size_t i = 0; i < r; ++i) std::copy_n(data(p) + i * pc, pc, out.data() + i * c + offset);
      offset += pc;
    }
    std::vector<Var> ps(parts.begin(), parts.end());
    return record(r, c, std::move(out), ps, [ps, r, c](Graph& g, const T* go) {
      std::size_t offset = 0;
      for (auto p : ps) {
        const std::size_t pc = g.cols(p);
        if (g.needs(p)) {
          T* gp = g.grad_buffer(p);
          for (std::size_t i = 0; i < r; ++i) kernels::axpy(T{1}, go + i * c + offset, gp + i * pc, pc);
        }
        offset += pc;
      }
    });
  }
  Var concat_cols(std::initializer_list<Var> parts) {
    return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
  }

  Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t c = cols(parts[0]);
    std::size_t r = 0;
    for (auto p : parts) {
      if (cols(p) != c) shape_mismatch("concat_rows", parts[0], p);
      r += rows(p);
    }
    std::vector<T> out;
    out.reserve(r * c);
    for (auto p : parts) out.insert(out.end(), data(p), data(p) + rows(p) * c);
    std::vector<Var> ps(parts.begin(), parts.end());
    return record(r, c, std::move(out), ps, [ps, c](Graph& g, const T* go) {
      std::size_t offset = 0;
      for (auto p : ps) {
        const std::size_t n = g.rows(p) * c;
        if (g.needs(p)) kernels::axpy(T{1}, go + offset, g.grad_buffer(p), n);
        offset += n;
      }
    });
  }
  Var concat_rows(std::initializer_list<Var> parts) {
    return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
  }

  Var slice_rows(Var a, std::size_t begin, std::size_t count) {
    const std::size_t c = cols(a);
    if (begin + count > rows(a) || count == 0) {
      throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                       std::to_string(begin + count) + ") out of range for " +
                       shape_string(rows(a), c));
    }
    std::vector<T> out(data(a) + begin * c, data(a) + (begin + count) * c);
    return record(count, c, std::move(out), {a}, [a, begin, count, c](Graph& g, const T* go) {
      kernels::axpy(T{1}, go, g.grad_buffer(a) + begin * c, count * c);
    });
  }

  // Rows of `table` selected by ids.
  template <typename Id>
  Var embedding(Var table, std::span<const Id> ids) {
    const std::size_t v = rows(table), e = cols(table);
    std::vector<T> out(ids.size() * e);
    std::vector<std::size_t> idx(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      idx[i] = static_cast<std::size_t>(ids[i]);
      if (idx[i] >= v) {
        throw ShapeError("embedding: id " + std::to_string(idx[i]) + " out of range for table " +
                         shape_string(v, e));
      }
      std::copy_n(data(table) + idx[i] * e, e, out.data() + i * e);
    }
    return record(ids.size(), e, std::move(out), {table},
                  [table, e, idx = std::move(idx)](Graph& g, const T* go) {
                    T* gt = g.grad_buffer(table);
                    for (std::size_t i = 0; i < idx.size(); ++i) kernels::axpy(T{1}, go + i * e, gt + idx[i] * e, e);
                  });
  }

  // ---- losses ----

  // Mean over non-ignored rows of -log softmax(logits row)[target].
  template <typename Id>
  Var cross_entropy(Var logits, std::span<const Id> targets, Id ignore_id) {
    const std::size_t r = rows(logits), c = cols(logits);
    if (targets.size() != r) {
      throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                       shape_string(r, c));
    }
    std::vector<T> probs(r * c);
    std::vector<std::size_t> active;
    T total{0};
    for (std::size_t i = 0; i < r; ++i) {
      if (targets[i] == ignore_id) continue;
      const auto t = static_cast<std::size_t>(targets[i]);
      if (t >= c) throw ShapeError("cross_entropy: target " + std::to_string(t) + " >= " + std::to_string(c));
      const T lse = softmax_row(data(logits) + i * c, probs.data() + i * c, c);
      total += lse - data(logits)[i * c + t];
      active.push_back(i);
    }
    if (active.empty()) throw NumericError("empty loss: every target position is ignored");
    const T inv = T{1} / static_cast<T>(active.size());
    std::vector<std::size_t> tgt(active.size());
    for (std::size_t j = 0; j < active.size(); ++j) tgt[j] = static_cast<std::size_t>(targets[active[j]]);
    return record(1, 1, {total * inv}, {logits},
                  [logits, c, inv, probs = std::move(probs), active = std::move(active),
                   tgt = std::move(tgt)](Graph& g, const T* go) {
                    T* gl = g.grad_buffer(logits);
                    const T s = go[0] * inv;
                    for (std::size_t j = 0; j < active.size(); ++j) {
                      const std::size_t i = active[j];
                      kernels::axpy(s, probs.data() + i * c, gl + i * c, c);
                      gl[i * c + tgt[j]] -= s;
                    }
                  });
  }

  // ---- backward ----

  void backward(Var loss) {
    if (!recording_) throw NumericError("backward on a non-recording graph");
    if (rows(loss) != 1 || cols(loss) != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_string(rows(loss), cols(loss)));
    }
    for (auto& n : nodes_) n.grad.clear();
    grad_buffer(loss)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      // Closures only write into parents, which have smaller ids, so n.grad
      // stays put while it is read.
      if (n.backward && !n.grad.empty()) n.backward(*this, n.grad.data());
    }
  }

  // Adds scale * d(loss)/d(parameter) into `grads[index]` for every bound parameter.
  void accumulate_parameter_grads(std::vector<std::vector<T>>& grads, T s = T{1}) const {
    for (const auto& [node_id, index] : bindings_) {
      const auto& g = nodes_[node_id].grad;
      if (g.empty()) continue;
      kernels::axpy(s, g.data(), grads[index].data(), g.size());
    }
  }
  void accumulate_parameter_grads(ParameterSet<T>& set, T s = T{1}) const {
    for (const auto& [node_id, index] : bindings_) {
      const auto& g = nodes_[node_id].grad;
      if (g.empty()) continue;
      kernels::axpy(s, g.data(), set[index].grad.data(), g.size());
    }
  }

  // Numerically stable softmax of one row; returns log-sum-exp.
  static T softmax_row(const T* in, T* out, std::size_t n) {
    T mx = in[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    T z{0};
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(in[j] - mx);
      z += out[j];
    }
    const T inv = T{1} / z;
    for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
    return mx + std::log(z);
  }

 private:
  using Backward = std::function<void(Graph&, const T*)>;

  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> value;
    const T* external = nullptr;
    std::vector<T> grad;
    bool requires_grad = false;
    Backward backward;
  };

  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw ShapeError("invalid tensor handle");
    return nodes_[v.id];
  }
  static const T* value_ptr(const Node& n) { return n.external ? n.external : n.value.data(); }

  bool needs(Var v) const { return nodes_[v.id].requires_grad; }

  T* grad_buffer(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad.assign(n.rows * n.cols, T{0});
    return n.grad.data();
  }

  Var push(std::size_t r, std::size_t c, std::vector<T> values, bool requires_grad) {
    Node n;
    n.rows = r;
    n.cols = c;
    n.value = std::move(values);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Var record(std::size_t r, std::size_t c, std::vector<T> values, const std::vector<Var>& parents,
             Backward backward) {
    bool rg = false;
    if (recording_) {
      for (auto p : parents) rg = rg || nodes_[p.id].requires_grad;
    }
    const Var v = push(r, c, std::move(values), rg);
    if (rg) nodes_[v.id].backward = std::move(backward);
    return v;
  }

  void set_backward(Var v, Backward backward) {
    if (nodes_[v.id].requires_grad) nodes_[v.id].backward = std::move(backward);
  }

  void check_size(const char* op, std::size_t r, std::size_t c, std::size_t n) const {
    if (r * c != n) {
      throw ShapeError(std::string(op) + ": " + std::to_string(n) + " values for shape " + shape_string(r, c));
    }
  }

  [[noreturn]] void shape_mismatch(const char* op, Var a, Var b) const {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(rows(a), cols(a)) +
                     " and " + shape_string(rows(b), cols(b)));
  }

  void require_same(const char* op, Var a, Var b) const {
    if (rows(a) != rows(b) || cols(a) != cols(b)) shape_mismatch(op, a, b);
  }

  bool recording_;
  std::vector<Node> nodes_;
  std::vector<std::pair<std::uint32_t, std::size_t>> bindings_;
};

}  // namespace narrative_infill::nn
