#pragma once

// Tape-based reverse-mode automatic differentiation over a small set of
// rank-2 operations. Graphs are built eagerly (define-by-run): every op
// computes its value immediately and records a closure that pushes the
// incoming gradient to its parents.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "emotl/errors.hpp"
#include "emotl/tensor.hpp"

namespace emotl {

using GradientSet = std::map<std::string, Tensor>;

// A named trainable array together with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() {
    if (grad.same_shape(value))
      grad.fill(0.0);
    else
      grad = Tensor(value.shape());
  }
  bool has_grad() const { return grad.same_shape(value) && !grad.empty(); }
};

class Graph;

// Lightweight handle to a node of a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

namespace detail {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMajor>;
using CMapM = Eigen::Map<const RowMajor>;

inline MapM as_eigen(Tensor& t) { return {t.data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }
inline CMapM as_eigen(const Tensor& t) { return {t.data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }
}  // namespace detail

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  explicit Graph(std::map<std::string, Tensor> feeds) : feeds_(std::move(feeds)) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf without gradient.
  Var constant(Tensor value) { return push(std::move(value), {}, nullptr, false); }

  // Leaf taken from the named inputs bound at construction.
  Var feed(const std::string& name) {
    auto it = feeds_.find(name);
    if (it == feeds_.end()) throw MissingInputError(name);
    return constant(it->second);
  }

  // Leaf bound to a parameter. Only trainable leaves receive gradients.
  // Registering the same parameter twice returns the same node.
  Var param(Parameter& p, bool trainable = true) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    Var v = push(p.value, {}, nullptr, trainable);
    nodes_[v.id()].param = trainable ? &p : nullptr;
    param_nodes_.emplace(&p, v.id());
    return v;
  }

  Var op(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
    bool needs = false;
    for (std::size_t p : parents) needs = needs || nodes_[p].needs_grad;
    return push(std::move(value), std::move(parents), needs ? std::move(backward) : BackwardFn{}, needs);
  }

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer of a node, allocated on first use.
  Tensor& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.grad.same_shape(n.value)) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  // Gradient of the last backward() root with respect to `v`; zeros when
  // `v` does not lie on a differentiable path.
  Tensor grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.same_shape(n.value)) return n.grad;
    return Tensor(n.value.shape());
  }

  // Reverse sweep from a scalar root. Gradients of trainable parameter
  // leaves are added into Parameter::grad and also returned by name.
  GradientSet backward(Var root) {
    if (root.graph() != this) throw ContractViolation("backward root belongs to another graph");
    const Tensor& rv = nodes_[root.id()].value;
    if (rv.size() != 1) throw ContractViolation("backward root must be scalar, got shape " + to_string(rv.shape()));
    for (Node& n : nodes_) n.grad = Tensor();
    grad_buffer(root.id())[0] = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || !n.backward || !n.grad.same_shape(n.value)) continue;
      n.backward(*this, i);
    }
    GradientSet out;
    for (auto& [p, id] : param_nodes_) {
      Node& n = nodes_[id];
      if (!n.param) continue;
      Tensor g = n.grad.same_shape(n.value) ? n.grad : Tensor(n.value.shape());
      if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.shape());
      p->grad += g;
      out.emplace(p->name, std::move(g));
    }
    return out;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool needs_grad = false;
    Parameter* param = nullptr;
  };

  Var push(Tensor value, std::vector<std::size_t> parents, BackwardFn backward, bool needs) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    n.needs_grad = needs;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::map<std::string, Tensor> feeds_;
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }

namespace detail {
inline Graph& graph_of(std::initializer_list<Var> vars) {
  Graph* g = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw ContractViolation("operation on an unbound variable");
    if (g && v.graph() != g) throw ContractViolation("operands belong to different graphs");
    g = v.graph();
  }
  return *g;
}

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected rank-2 operand, got " + to_string(t.shape()));
}

// Adds `delta` into the gradient of `id` if that node participates in backward.
template <class F>
inline void accumulate(Graph& g, std::size_t id, F&& f) {
  if (g.needs_grad(id)) f(g.grad_buffer(id));
}
}  // namespace detail

// ---------------------------------------------------------------- products

inline Var matmul(Var a, Var b) {
  Graph& g = detail::graph_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_matrix(av, "matmul");
  detail::require_matrix(bv, "matmul");
  if (av.cols() != bv.rows())
    throw DimensionError("matmul: " + to_string(av.shape()) + " x " + to_string(bv.shape()));
  Tensor out = Tensor::zeros(av.rows(), bv.cols());
  detail::as_eigen(out).noalias() = detail::as_eigen(av) * detail::as_eigen(bv);
  const std::size_t ia = a.id(), ib = b.id();
  return g.op(std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    auto go = detail::as_eigen(std::as_const(g.grad_buffer(self)));
    detail::accumulate(g, ia, [&](Tensor& ga) {
      detail::as_eigen(ga).noalias() += go * detail::as_eigen(g.value(ib)).transpose();
    });
    detail::accumulate(g, ib, [&](Tensor& gb) {
      detail::as_eigen(gb).noalias() += detail::as_eigen(g.value(ia)).transpose() * go;
    });
  });
}

// x [m×k] · Wᵀ (W is [n×k]) + bias [1×n]. Pass an invalid Var for no bias.
inline Var linear(Var x, Var weight, Var bias = {}) {
  Graph& g = bias.valid() ? detail::graph_of({x, weight, bias}) : detail::graph_of({x, weight});
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  detail::require_matrix(xv, "linear");
  detail::require_matrix(wv, "linear");
  if (xv.cols() != wv.cols())
    throw DimensionError("linear: input " + to_string(xv.shape()) + " does not match weight " + to_string(wv.shape()));
  Tensor out = Tensor::zeros(xv.rows(), wv.rows());
  detail::as_eigen(out).noalias() = detail::as_eigen(xv) * detail::as_eigen(wv).transpose();
  std::vector<std::size_t> parents{x.id(), weight.id()};
  if (bias.valid()) {
    const Tensor& bv = bias.value();
    if (bv.rank() != 2 || bv.rows() != 1 || bv.cols() != wv.rows())
      throw DimensionError("linear: bias " + to_string(bv.shape()) + " does not match " + std::to_string(wv.rows()) + " outputs");
    detail::as_eigen(out).rowwise() += detail::as_eigen(bv).row(0);
    parents.push_back(bias.id());
  }
  const std::size_t ix = x.id(), iw = weight.id();
  const bool has_bias = bias.valid();
  const std::size_t ib = has_bias ? bias.id() : 0;
  return g.op(std::move(out), std::move(parents), [ix, iw, ib, has_bias](Graph& g, std::size_t self) {
    auto go = detail::as_eigen(std::as_const(g.grad_buffer(self)));
    detail::accumulate(g, ix, [&](Tensor& gx) { detail::as_eigen(gx).noalias() += go * detail::as_eigen(g.value(iw)); });
    detail::accumulate(g, iw, [&](Tensor& gw) {
      detail::as_eigen(gw).noalias() += go.transpose() * detail::as_eigen(g.value(ix));
    });
    if (has_bias) detail::accumulate(g, ib, [&](Tensor& gb) { detail::as_eigen(gb).row(0) += go.colwise().sum(); });
  });
}

// ------------------------------------------------------------ elementwise

// a + b where b has the shape of a or is a [1×n] row broadcast over a's rows.
inline Var add(Var a, Var b) {
  Graph& g = detail::graph_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_matrix(av, "add");
  detail::require_matrix(bv, "add");
  const bool broadcast = !av.same_shape(bv);
  if (broadcast && !(bv.rows() == 1 && bv.cols() == av.cols()))
    throw DimensionError("add: shapes " + to_string(av.shape()) + " and " + to_string(bv.shape()) + " are incompatible");
  Tensor out = av;
  if (broadcast)
    detail::as_eigen(out).rowwise() += detail::as_eigen(bv).row(0);
  else
    out += bv;
  const std::size_t ia = a.id(), ib = b.id();
  return g.op(std::move(out), {ia, ib}, [ia, ib, broadcast](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_buffer(self);
    detail::accumulate(g, ia, [&](Tensor& ga) { ga += go; });
    detail::accumulate(g, ib, [&](Tensor& gb) {
      if (broadcast)
        detail::as_eigen(gb).row(0) += detail::as_eigen(go).colwise().sum();
      else
        gb += go;
    });
  });
}

inline Var mul(Var a, Var b) {
  Graph& g = detail::graph_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  av.require_same_shape(bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return g.op(std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_buffer(self);
    detail::accumulate(g, ia, [&](Tensor& ga) {
      const Tensor& bv = g.value(ib);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bv[i];
    });
    detail::accumulate(g, ib, [&](Tensor& gb) {
      const Tensor& av = g.value(ia);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * av[i];
    });
  });
}

// Multiplies row r of x [m×n] by s[r] where s is [m×1].
inline Var scale_rows(Var x, Var s) {
  Graph& g = detail::graph_of({x, s});
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  detail::require_matrix(xv, "scale_rows");
  detail::require_matrix(sv, "scale_rows");
  if (sv.rows() != xv.rows() || sv.cols() != 1)
    throw DimensionError("scale_rows: scale " + to_string(sv.shape()) + " for " + to_string(xv.shape()));
  Tensor out = xv;
  const std::size_t n = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) *= sv[r];
  const std::size_t ix = x.id(), is = s.id();
  return g.op(std::move(out), {ix, is}, [ix, is](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_buffer(self);
    const std::size_t m = go.rows(), n = go.cols();
    detail::accumulate(g, ix, [&](Tensor& gx) {
      const Tensor& sv = g.value(is);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) gx.at(r, c) += go.at(r, c) * sv[r];
    });
    detail::accumulate(g, is, [&](Tensor& gs) {
      const Tensor& xv = g.value(ix);
      for (std::size_t r = 0; r < m; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c) acc += go.at(r, c) * xv.at(r, c);
        gs[r] += acc;
      }
    });
  });
}

inline Var scale(Var x, double factor) {
  Graph& g = detail::graph_of({x});
  Tensor out = x.value();
  out *= factor;
  const std::size_t ix = x.id();
  return g.op(std::move(out), {ix}, [ix, factor](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_buffer(self);
    detail::accumulate(g, ix, [&](Tensor& gx) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * go[i];
    });
  });
}

namespace detail {
// Unary op whose derivative is expressed through its own output y.
template <class Fwd, class DyFromY>
Var unary_from_output(Var x, Fwd fwd, DyFromY dy) {
  Graph& g = graph_of({x});
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(out[i]);
  const std::size_t ix = x.id();
  return g.op(std::move(out), {ix}, [ix, dy](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_buffer(self);
    const Tensor& y = g.value(self);
    accumulate(g, ix, [&](Tensor& gx) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * dy(y[i]);
    });
  });
}

inline double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace detail

inline Var tanh(Var x) {
  return detail::unary_from_output(x, [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Var x) {
  return detail::unary_from_output(x, detail::stable_sigmoid, [](double y) { return y * (1.0 - y); });
}

inline Var log(Var x) {
  Graph& g = detail::graph_of({x});
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(out[i] > 0.0)) throw ContractViolation("log of a non-positive value");
    out[i] = std::log(out[i]);
  }
  const std::size_t ix = x.id();
  return g.op(std::move(out), {ix}, [ix](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_buffer(self);
    const Tensor& xv = g.value(ix);
    detail::accumulate(g, ix, [&](Tensor& gx) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] / xv[i];
    });
  });
}

// ------------------------------------------------------------- structural

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat_cols of nothing");
  Graph& g = *parts.front().graph();
  const std::size_t rows = parts.front().value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids, offsets;
  for (const Var& p : parts) {
    if (p.graph() != &g) throw ContractViolation("operands belong to different graphs");
    const Tensor& v = p.value();
    detail::require_matrix(v, "concat_cols");
    if (v.rows() != rows)
      throw DimensionError("concat_cols: row counts " + std::to_string(rows) + " and " + std::to_string(v.rows()) + " differ");
    ids.push_back(p.id());
    offsets.push_back(total);
    total += v.cols();
  }
  Tensor out = Tensor::zeros(rows, total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * v.cols(), v.cols(), out.data() + r * total + offsets[k]);
  }
  return g.op(std::move(out), ids, [ids, offsets](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_buffer(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      detail::accumulate(g, ids[k], [&](Tensor& gp) {
        const std::size_t w = gp.cols();
        for (std::size_t r = 0; r < gp.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gp.at(r, c) += go.at(r, offsets[k] + c);
      });
    }
  });
}

inline Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  Graph& g = detail::graph_of({x});
  const Tensor& xv = x.value();
  detail::require_matrix(xv, "slice_cols");
  if (begin + count > xv.cols() || count == 0)
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of " + std::to_string(xv.cols()) + " columns");
  Tensor out = Tensor::zeros(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r) std::copy_n(xv.data() + r * xv.cols() + begin, count, out.data() + r * count);
  const std::size_t ix = x.id();
  return g.op(std::move(out), {ix}, [ix, begin, count](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_buffer(self);
    detail::accumulate(g, ix, [&](Tensor& gx) {
      for (std::size_t r = 0; r < go.rows(); ++r)
        for (std::size_t c = 0; c < count; ++c) gx.at(r, begin + c) += go.at(r, c);
    });
  });
}

// Stacks operands vertically; all must have the same column count.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat_rows of nothing");
  Graph& g = *parts.front().graph();
  const std::size_t cols = parts.front().value().cols();
  std::size_t total = 0;
  std::vector<std::size_t> ids, offsets;
  for (const Var& p : parts) {
    if (p.graph() != &g) throw ContractViolation("operands belong to different graphs");
    const Tensor& v = p.value();
    detail::require_matrix(v, "concat_rows");
    if (v.cols() != cols)
      throw DimensionError("concat_rows: column counts " + std::to_string(cols) + " and " + std::to_string(v.cols()) + " differ");
    ids.push_back(p.id());
    offsets.push_back(total);
    total += v.rows();
  }
  Tensor out = Tensor::zeros(total, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    std::copy_n(v.data(), v.size(), out.data() + offsets[k] * cols);
  }
  return g.op(std::move(out), ids, [ids, offsets](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_buffer(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      detail::accumulate(g, ids[k], [&](Tensor& gp) {
        const double* src = go.data() + offsets[k] * go.cols();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += src[i];
      });
    }
  });
}

// Rows of `table` picked by `ids` (embedding lookup).
inline Var gather_rows(Var table, const std::vector<std::size_t>& ids) {
  Graph& g = detail::graph_of({table});
  const Tensor& tv = table.value();
  detail::require_matrix(tv, "gather_rows");
  if (ids.empty()) throw ContractViolation("gather_rows with no indices");
  const std::size_t w = tv.cols();
  Tensor out = Tensor::zeros(ids.size(), w);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows())
      throw DimensionError("gather_rows: index " + std::to_string(ids[r]) + " out of " + std::to_string(tv.rows()) + " rows");
    std::copy_n(tv.data() + ids[r] * w, w, out.data() + r * w);
  }
  const std::size_t it = table.id();
  return g.op(std::move(out), {it}, [it, ids](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_buffer(self);
    detail::accumulate(g, it, [&](Tensor& gt) {
      const std::size_t w = gt.cols();
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t c = 0; c < w; ++c) gt.at(ids[r], c) += go.at(r, c);
    });
  });
}

// Row r of the result is row r of candidates[index[r]]; a negative index
// yields a zero row. All candidates share one shape.
inline Var select_rows(const std::vector<Var>& candidates, const std::vector<int>& index) {
  if (candidates.empty()) throw ContractViolation("select_rows needs at least one candidate");
  Graph& g = *candidates.front().graph();
  const Tensor& first = candidates.front().value();
  detail::require_matrix(first, "select_rows");
  if (index.size() != first.rows())
    throw DimensionError("select_rows: " + std::to_string(index.size()) + " indices for " + std::to_string(first.rows()) + " rows");
  std::vector<std::size_t> ids;
  for (const Var& c : candidates) {
    c.value().require_same_shape(first, "select_rows");
    ids.push_back(c.id());
  }
  const std::size_t w = first.cols();
  Tensor out = Tensor::zeros(first.rows(), w);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0) continue;
    if (static_cast<std::size_t>(index[r]) >= candidates.size())
      throw DimensionError("select_rows: index " + std::to_string(index[r]) + " out of " + std::to_string(candidates.size()));
    std::copy_n(candidates[index[r]].value().data() + r * w, w, out.data() + r * w);
  }
  return g.op(std::move(out), ids, [ids, index](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_buffer(self);
    const std::size_t w = go.cols();
    for (std::size_t r = 0; r < index.size(); ++r) {
      if (index[r] < 0) continue;
      detail::accumulate(g, ids[index[r]], [&](Tensor& gc) {
        for (std::size_t c = 0; c < w; ++c) gc.at(r, c) += go.at(r, c);
      });
    }
  });
}

// ------------------------------------------------------------- reductions

inline Var sum(Var x) {
  Graph& g = detail::graph_of({x});
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const std::size_t ix = x.id();
  return g.op(Tensor::filled(1, 1, s), {ix}, [ix](Graph& g, std::size_t self) {
    const double go = g.grad_buffer(self)[0];
    detail::accumulate(g, ix, [&](Tensor& gx) {
      for (double& v : gx.values()) v += go;
    });
  });
}

inline Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ContractViolation("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

// Softmax over each row with max-subtraction. Where `mask` is given, entries
// with mask 0 are excluded and get probability exactly 0; every row needs at
// least one unmasked entry.
inline Var row_softmax(Var x, const Tensor* mask = nullptr) {
  Graph& g = detail::graph_of({x});
  const Tensor& xv = x.value();
  detail::require_matrix(xv, "row_softmax");
  if (mask) xv.require_same_shape(*mask, "row_softmax mask");
  Tensor out = Tensor::zeros(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < xv.cols(); ++c)
      if (!mask || mask->at(r, c) != 0.0) mx = std::max(mx, xv.at(r, c));
    if (mx == -std::numeric_limits<double>::infinity())
      throw ContractViolation("row_softmax: row " + std::to_string(r) + " has every position masked");
    double z = 0.0;
    for (std::size_t c = 0; c < xv.cols(); ++c) {
      if (mask && mask->at(r, c) == 0.0) continue;
      out.at(r, c) = std::exp(xv.at(r, c) - mx);
      z += out.at(r, c);
    }
    for (std::size_t c = 0; c < xv.cols(); ++c) out.at(r, c) /= z;
  }
  const std::size_t ix = x.id();
  return g.op(std::move(out), {ix}, [ix](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_buffer(self);
    const Tensor& y = g.value(self);
    detail::accumulate(g, ix, [&](Tensor& gx) {
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) dot += go.at(r, c) * y.at(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c) gx.at(r, c) += y.at(r, c) * (go.at(r, c) - dot);
      }
    });
  });
}

// Mean negative log-likelihood of `targets` under row-softmax(logits).
// Rows whose target is negative are skipped; at least one row must count.
inline Var cross_entropy(Var logits, const std::vector<int>& targets) {
  Graph& g = detail::graph_of({logits});
  const Tensor& lv = logits.value();
  detail::require_matrix(lv, "cross_entropy");
  if (targets.size() != lv.rows())
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(lv.rows()) + " rows");
  const std::size_t n = lv.cols();
  Tensor probs = Tensor::zeros(lv.rows(), n);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= n)
      throw DimensionError("cross_entropy: target " + std::to_string(targets[r]) + " out of " + std::to_string(n) + " classes");
    double mx = lv.at(r, 0);
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, lv.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (probs.at(r, c) = std::exp(lv.at(r, c) - mx));
    for (std::size_t c = 0; c < n; ++c) probs.at(r, c) /= z;
    total += std::log(z) + mx - lv.at(r, targets[r]);
    ++counted;
  }
  if (counted == 0) throw ContractViolation("cross_entropy: no rows with a target");
  const std::size_t il = logits.id();
  const double inv = 1.0 / static_cast<double>(counted);
  return g.op(Tensor::filled(1, 1, total * inv), {il},
              [il, targets, inv, probs = std::move(probs)](Graph& g, std::size_t self) {
                const double go = g.grad_buffer(self)[0] * inv;
                detail::accumulate(g, il, [&](Tensor& gl) {
                  for (std::size_t r = 0; r < gl.rows(); ++r) {
                    if (targets[r] < 0) continue;
                    for (std::size_t c = 0; c < gl.cols(); ++c) gl.at(r, c) += go * probs.at(r, c);
                    gl.at(r, targets[r]) -= go;
                  }
                });
              });
}

}  // namespace emotl
