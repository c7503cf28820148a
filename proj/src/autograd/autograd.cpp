// SPDX-License-Identifier: Apache-2.0
#include "currlab/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "currlab/error.hpp"

namespace currlab::autograd {

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Neg: return "neg";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Square: return "square";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Clamp: return "clamp";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::WeightedSum: return "weighted_sum";
    case OpKind::Softmax: return "softmax";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::SumRows: return "sum_rows";
    case OpKind::BroadcastRows: return "broadcast_rows";
    case OpKind::SumCols: return "sum_cols";
    case OpKind::BroadcastCols: return "broadcast_cols";
    case OpKind::Expand: return "expand";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Numeric kernels. The numeric backward sweep is written in terms of these
// same kernels, in the same order as the emitted graph version, so the two
// produce identical floating-point results.
// ---------------------------------------------------------------------------
namespace {

[[noreturn]] void shape_fail(OpKind op, const std::string& detail) {
  throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

void require_rank(OpKind op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank)
    shape_fail(op, "expected rank " + std::to_string(rank) + ", got " + shape_string(t.shape()));
}

void require_same(OpKind op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    shape_fail(op, "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

Tensor k_add(const Tensor& a, const Tensor& b) { return zip(a, b, [](double x, double y) { return x + y; }); }
Tensor k_sub(const Tensor& a, const Tensor& b) { return zip(a, b, [](double x, double y) { return x - y; }); }
Tensor k_mul(const Tensor& a, const Tensor& b) { return zip(a, b, [](double x, double y) { return x * y; }); }
Tensor k_div(const Tensor& a, const Tensor& b) { return zip(a, b, [](double x, double y) { return x / y; }); }
Tensor k_neg(const Tensor& a) { return map(a, [](double x) { return -x; }); }
Tensor k_scale(const Tensor& a, double c) { return map(a, [c](double x) { return x * c; }); }
Tensor k_add_scalar(const Tensor& a, double c) { return map(a, [c](double x) { return x + c; }); }
Tensor k_square(const Tensor& a) { return map(a, [](double x) { return x * x; }); }

Tensor k_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * b.at(p, j);
    }
  return out;
}

Tensor k_transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor k_sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return Tensor::scalar(s);
}

Tensor k_expand(const Tensor& s, const Shape& shape) { return Tensor(shape, s.item()); }

Tensor k_sum_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a.at(i, j);
  return out;
}

Tensor k_broadcast_rows(const Tensor& v, std::size_t rows) {
  const std::size_t n = v.size();
  Tensor out(Shape{rows, n});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = v[j];
  return out;
}

Tensor k_sum_cols(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a.at(i, j);
    out[i] = s;
  }
  return out;
}

Tensor k_broadcast_cols(const Tensor& v, std::size_t cols) {
  const std::size_t m = v.size();
  Tensor out(Shape{m, cols});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = v[i];
  return out;
}

Tensor k_softmax(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out.at(i, j) = std::exp(x.at(i, j) - mx);
      z += out.at(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= z;
  }
  return out;
}

Tensor k_cross_entropy(const Tensor& x, const std::vector<std::size_t>& labels) {
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x.at(i, j) - mx);
    out[i] = mx + std::log(z) - x.at(i, labels[i]);
  }
  return out;
}

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
  Tensor out(Shape{labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) out.at(i, labels[i]) = 1.0;
  return out;
}

Tensor clamp_mask(const Tensor& x, double lo, double hi) {
  return map(x, [lo, hi](double v) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor compute(OpKind op, const Tensor* a, const Tensor* b, const OpAttrs& at) {
  switch (op) {
    case OpKind::Leaf: shape_fail(op, "leaf has no computation");
    case OpKind::MatMul:
      require_rank(op, *a, 2);
      require_rank(op, *b, 2);
      if (a->cols() != b->rows())
        shape_fail(op, "inner dimensions differ: " + shape_string(a->shape()) + " x " +
                           shape_string(b->shape()));
      return k_matmul(*a, *b);
    case OpKind::Transpose: require_rank(op, *a, 2); return k_transpose(*a);
    case OpKind::Add: require_same(op, *a, *b); return k_add(*a, *b);
    case OpKind::Sub: require_same(op, *a, *b); return k_sub(*a, *b);
    case OpKind::Mul: require_same(op, *a, *b); return k_mul(*a, *b);
    case OpKind::Div: require_same(op, *a, *b); return k_div(*a, *b);
    case OpKind::Neg: return k_neg(*a);
    case OpKind::Scale: return k_scale(*a, at.a);
    case OpKind::AddScalar: return k_add_scalar(*a, at.a);
    case OpKind::Tanh: return map(*a, [](double x) { return std::tanh(x); });
    case OpKind::Sigmoid: return map(*a, sigmoid_scalar);
    case OpKind::Square: return k_square(*a);
    case OpKind::Sqrt: return map(*a, [](double x) { return std::sqrt(x); });
    case OpKind::Clamp:
      if (!(at.a <= at.b)) shape_fail(op, "lower bound exceeds upper bound");
      return map(*a, [lo = at.a, hi = at.b](double x) { return std::clamp(x, lo, hi); });
    case OpKind::Sum: return k_sum(*a);
    case OpKind::Mean: return k_scale(k_sum(*a), 1.0 / static_cast<double>(a->size()));
    case OpKind::WeightedSum:
      require_rank(op, *a, 1);
      require_same(op, *a, *b);
      return k_sum(k_mul(*a, *b));
    case OpKind::Softmax: require_rank(op, *a, 2); return k_softmax(*a);
    case OpKind::SoftmaxCrossEntropy: {
      require_rank(op, *a, 2);
      if (!at.labels || at.labels->size() != a->rows())
        shape_fail(op, "label count does not match logits rows " + shape_string(a->shape()));
      for (auto y : *at.labels)
        if (y >= a->cols()) shape_fail(op, "label " + std::to_string(y) + " out of range");
      return k_cross_entropy(*a, *at.labels);
    }
    case OpKind::SumRows: require_rank(op, *a, 2); return k_sum_rows(*a);
    case OpKind::BroadcastRows:
      require_rank(op, *a, 1);
      if (at.count == 0) shape_fail(op, "row count must be positive");
      return k_broadcast_rows(*a, at.count);
    case OpKind::SumCols: require_rank(op, *a, 2); return k_sum_cols(*a);
    case OpKind::BroadcastCols:
      require_rank(op, *a, 1);
      if (at.count == 0) shape_fail(op, "column count must be positive");
      return k_broadcast_cols(*a, at.count);
    case OpKind::Expand:
      if (!a->is_scalar()) shape_fail(op, "source must be a scalar");
      return k_expand(*a, at.shape);
  }
  shape_fail(op, "unknown operation");
}

std::size_t arity(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return 0;
    case OpKind::MatMul:
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div:
    case OpKind::WeightedSum: return 2;
    default: return 1;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

const Tensor& Var::value() const { return graph_->value(id_); }
OpKind Var::op() const { return graph_->op(id_); }

Tensor GradientMap::operator[](Var v) const {
  if (v.id() < grads_.size() && grads_[v.id()]) return *grads_[v.id()];
  return Tensor(v.value().shape());
}

bool GradientMap::contains(Var v) const { return v.id() < grads_.size() && grads_[v.id()].has_value(); }

std::span<const NodeId> Graph::inputs(NodeId id) const {
  const Node& n = nodes_.at(id);
  return {n.in.data(), n.n_inputs};
}

Var Graph::push(Node node) {
  value_bytes_ += node.value.size() * sizeof(double);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Graph::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::apply(OpKind op, std::span<const Var> inputs, OpAttrs attrs) {
  const std::size_t k = arity(op);
  if (op == OpKind::Leaf) throw GraphError("apply: leaves are created with variable()/constant()");
  if (inputs.size() != k)
    throw GraphError(std::string(op_name(op)) + ": expected " + std::to_string(k) + " inputs");
  for (const Var& v : inputs)
    if (&v.graph() != this) throw GraphError(std::string(op_name(op)) + ": input from another graph");

  Node n;
  n.op = op;
  n.n_inputs = static_cast<std::uint8_t>(k);
  for (std::size_t i = 0; i < k; ++i) {
    n.in[i] = inputs[i].id();
    n.requires_grad = n.requires_grad || nodes_[inputs[i].id()].requires_grad;
  }
  const Tensor* a = k > 0 ? &nodes_[n.in[0]].value : nullptr;
  const Tensor* b = k > 1 ? &nodes_[n.in[1]].value : nullptr;
  n.value = compute(op, a, b, attrs);
  n.attrs = std::move(attrs);
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Numeric reverse sweep
// ---------------------------------------------------------------------------
GradientMap Graph::backward(Var root) const {
  if (&root.graph() != this) throw GraphError("backward: root belongs to another graph");
  if (!root.value().is_scalar())
    throw GraphError("backward: root must be scalar, got shape " + shape_string(root.shape()));

  GradientMap out;
  out.graph_ = this;
  auto& adj = out.grads_;
  adj.assign(root.id() + 1, std::nullopt);
  adj[root.id()] = Tensor(root.shape(), 1.0);

  auto accumulate = [&](NodeId id, Tensor g) {
    if (!nodes_[id].requires_grad) return;
    if (adj[id])
      *adj[id] = k_add(*adj[id], g);
    else
      adj[id] = std::move(g);
  };

  for (std::size_t idx = root.id() + 1; idx-- > 0;) {
    if (!adj[idx]) continue;
    const Node& n = nodes_[idx];
    if (n.op == OpKind::Leaf || !n.requires_grad) continue;
    const Tensor& G = *adj[idx];
    const Tensor& Y = n.value;
    const NodeId ia = n.in[0];
    const NodeId ib = n.in[1];
    const Tensor& A = nodes_[ia].value;
    const bool ga = nodes_[ia].requires_grad;
    const bool gb = n.n_inputs > 1 && nodes_[ib].requires_grad;
    const Tensor* B = n.n_inputs > 1 ? &nodes_[ib].value : nullptr;

    switch (n.op) {
      case OpKind::Leaf: break;
      case OpKind::MatMul:
        if (ga) accumulate(ia, k_matmul(G, k_transpose(*B)));
        if (gb) accumulate(ib, k_matmul(k_transpose(A), G));
        break;
      case OpKind::Transpose: accumulate(ia, k_transpose(G)); break;
      case OpKind::Add:
        if (ga) accumulate(ia, G);
        if (gb) accumulate(ib, G);
        break;
      case OpKind::Sub:
        if (ga) accumulate(ia, G);
        if (gb) accumulate(ib, k_neg(G));
        break;
      case OpKind::Mul:
        if (ga) accumulate(ia, k_mul(G, *B));
        if (gb) accumulate(ib, k_mul(G, A));
        break;
      case OpKind::Div:
        if (ga) accumulate(ia, k_div(G, *B));
        if (gb) accumulate(ib, k_neg(k_div(k_mul(G, Y), *B)));
        break;
      case OpKind::Neg: accumulate(ia, k_neg(G)); break;
      case OpKind::Scale: accumulate(ia, k_scale(G, n.attrs.a)); break;
      case OpKind::AddScalar: accumulate(ia, G); break;
      case OpKind::Tanh: accumulate(ia, k_mul(G, k_add_scalar(k_neg(k_square(Y)), 1.0))); break;
      case OpKind::Sigmoid: accumulate(ia, k_mul(k_mul(G, Y), k_add_scalar(k_neg(Y), 1.0))); break;
      case OpKind::Square: accumulate(ia, k_mul(G, k_scale(A, 2.0))); break;
      case OpKind::Sqrt: {
        // d sqrt(x) at x = 0 is taken as 0 so an all-zero second moment
        // does not poison the sweep.
        Tensor half = k_scale(G, 0.5);
        accumulate(ia, zip(half, Y, [](double g, double y) { return y == 0.0 ? 0.0 : g / y; }));
        break;
      }
      case OpKind::Clamp: accumulate(ia, k_mul(G, clamp_mask(A, n.attrs.a, n.attrs.b))); break;
      case OpKind::Sum: accumulate(ia, k_expand(G, A.shape())); break;
      case OpKind::Mean:
        accumulate(ia, k_scale(k_expand(G, A.shape()), 1.0 / static_cast<double>(A.size())));
        break;
      case OpKind::WeightedSum:
        if (ga) accumulate(ia, k_mul(*B, k_expand(G, B->shape())));
        if (gb) accumulate(ib, k_mul(A, k_expand(G, A.shape())));
        break;
      case OpKind::Softmax:
        accumulate(ia, k_mul(Y, k_sub(G, k_broadcast_cols(k_sum_cols(k_mul(G, Y)), Y.cols()))));
        break;
      case OpKind::SoftmaxCrossEntropy:
        accumulate(ia, k_mul(k_sub(k_softmax(A), one_hot(*n.attrs.labels, A.cols())),
                             k_broadcast_cols(G, A.cols())));
        break;
      case OpKind::SumRows: accumulate(ia, k_broadcast_rows(G, A.rows())); break;
      case OpKind::BroadcastRows: accumulate(ia, k_sum_rows(G)); break;
      case OpKind::SumCols: accumulate(ia, k_broadcast_cols(G, A.cols())); break;
      case OpKind::BroadcastCols: accumulate(ia, k_sum_cols(G)); break;
      case OpKind::Expand: accumulate(ia, k_sum(G)); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reverse sweep emitted as graph operations
// ---------------------------------------------------------------------------
std::vector<Var> Graph::grad_as_graph(Var loss, std::span<const Var> params) {
  if (&loss.graph() != this) throw GraphError("grad_as_graph: loss belongs to another graph");
  if (!loss.value().is_scalar())
    throw GraphError("grad_as_graph: loss must be scalar, got shape " + shape_string(loss.shape()));
  if (params.empty()) return {};

  NodeId lo = loss.id();
  for (const Var& p : params) {
    if (&p.graph() != this) throw GraphError("grad_as_graph: parameter from another graph");
    lo = std::min(lo, p.id());
  }
  const std::size_t span_len = loss.id() - lo + 1;
  auto local = [lo](NodeId id) { return static_cast<std::size_t>(id - lo); };

  std::vector<char> is_param(span_len, 0);
  for (const Var& p : params)
    if (p.id() <= loss.id()) is_param[local(p.id())] = 1;

  // A node matters only if it lies on a path from some parameter.
  std::vector<char> dep(span_len, 0);
  for (NodeId id = lo; id <= loss.id(); ++id) {
    if (is_param[local(id)]) {
      dep[local(id)] = 1;
      continue;
    }
    const Node& n = nodes_[id];
    for (std::size_t k = 0; k < n.n_inputs; ++k)
      if (n.in[k] >= lo && dep[local(n.in[k])]) dep[local(id)] = 1;
  }

  std::vector<Var> adj(span_len);
  auto accumulate = [&](NodeId id, Var g) {
    if (id < lo || !dep[local(id)]) return;
    Var& slot = adj[local(id)];
    slot = slot.valid() ? add(slot, g) : g;
  };
  auto depends = [&](NodeId id) { return id >= lo && dep[local(id)] != 0; };

  adj[local(loss.id())] = constant(Tensor(loss.shape(), 1.0));

  for (NodeId id = loss.id() + 1; id-- > lo;) {
    const std::size_t li = local(id);
    if (!adj[li].valid() || !dep[li] || is_param[li]) continue;

    // Copy what we need: emitting nodes may reallocate nodes_.
    const OpKind op = nodes_[id].op;
    if (op == OpKind::Leaf) continue;
    const NodeId ia = nodes_[id].in[0];
    const NodeId ib = nodes_[id].in[1];
    const bool two = nodes_[id].n_inputs > 1;
    const OpAttrs attrs = nodes_[id].attrs;
    const bool da = depends(ia);
    const bool db = two && depends(ib);
    const Var G = adj[li];
    const Var Y(this, id);
    const Var A(this, ia);
    const Var B = two ? Var(this, ib) : Var();

    switch (op) {
      case OpKind::Leaf: break;
      case OpKind::MatMul:
        if (da) accumulate(ia, matmul(G, transpose(B)));
        if (db) accumulate(ib, matmul(transpose(A), G));
        break;
      case OpKind::Transpose: accumulate(ia, transpose(G)); break;
      case OpKind::Add:
        if (da) accumulate(ia, G);
        if (db) accumulate(ib, G);
        break;
      case OpKind::Sub:
        if (da) accumulate(ia, G);
        if (db) accumulate(ib, neg(G));
        break;
      case OpKind::Mul:
        if (da) accumulate(ia, mul(G, B));
        if (db) accumulate(ib, mul(G, A));
        break;
      case OpKind::Div:
        if (da) accumulate(ia, div(G, B));
        if (db) accumulate(ib, neg(div(mul(G, Y), B)));
        break;
      case OpKind::Neg: accumulate(ia, neg(G)); break;
      case OpKind::Scale: accumulate(ia, scale(G, attrs.a)); break;
      case OpKind::AddScalar: accumulate(ia, G); break;
      case OpKind::Tanh: accumulate(ia, mul(G, add_scalar(neg(square(Y)), 1.0))); break;
      case OpKind::Sigmoid: accumulate(ia, mul(mul(G, Y), add_scalar(neg(Y), 1.0))); break;
      case OpKind::Square: accumulate(ia, mul(G, scale(A, 2.0))); break;
      case OpKind::Sqrt: accumulate(ia, div(scale(G, 0.5), Y)); break;
      case OpKind::Clamp: {
        Var mask = constant(clamp_mask(A.value(), attrs.a, attrs.b));
        accumulate(ia, mul(G, mask));
        break;
      }
      case OpKind::Sum: accumulate(ia, expand(G, A.shape())); break;
      case OpKind::Mean: {
        const Shape s = A.shape();
        accumulate(ia, scale(expand(G, s), 1.0 / static_cast<double>(shape_size(s))));
        break;
      }
      case OpKind::WeightedSum:
        if (da) accumulate(ia, mul(B, expand(G, B.shape())));
        if (db) accumulate(ib, mul(A, expand(G, A.shape())));
        break;
      case OpKind::SoftmaxCrossEntropy: {
        const std::size_t classes = A.value().cols();
        Var target = constant(one_hot(*attrs.labels, classes));
        accumulate(ia, mul(sub(softmax(A), target), broadcast_cols(G, classes)));
        break;
      }
      case OpKind::SumRows: accumulate(ia, broadcast_rows(G, A.value().rows())); break;
      case OpKind::BroadcastRows: accumulate(ia, sum_rows(G)); break;
      case OpKind::SumCols: accumulate(ia, broadcast_cols(G, A.value().cols())); break;
      case OpKind::BroadcastCols: accumulate(ia, sum_cols(G)); break;
      case OpKind::Expand: accumulate(ia, sum(G)); break;
      case OpKind::Softmax:
        throw GraphError("grad_as_graph: unsupported operation '" + std::string(op_name(op)) + "'");
    }
  }

  std::vector<Var> grads;
  grads.reserve(params.size());
  for (const Var& p : params) {
    const Var g = p.id() <= loss.id() ? adj[local(p.id())] : Var();
    grads.push_back(g.valid() ? g : constant(Tensor(p.shape())));
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Forward op helpers
// ---------------------------------------------------------------------------
namespace {
Var unary(OpKind op, Var a, OpAttrs attrs = {}) {
  const Var in[] = {a};
  return a.graph().apply(op, in, std::move(attrs));
}
Var binary(OpKind op, Var a, Var b) {
  const Var in[] = {a, b};
  return a.graph().apply(op, in);
}
}  // namespace

Var forward_op(OpKind op, std::span<const Var> inputs) {
  switch (op) {
    case OpKind::Scale:
    case OpKind::AddScalar:
    case OpKind::Clamp:
    case OpKind::SoftmaxCrossEntropy:
    case OpKind::BroadcastRows:
    case OpKind::BroadcastCols:
    case OpKind::Expand:
    case OpKind::Leaf:
      throw GraphError("forward_op: '" + std::string(op_name(op)) + "' needs attributes");
    default: break;
  }
  if (inputs.empty()) throw GraphError("forward_op: no inputs");
  return inputs[0].graph().apply(op, inputs);
}

Var matmul(Var a, Var b) { return binary(OpKind::MatMul, a, b); }
Var transpose(Var a) { return unary(OpKind::Transpose, a); }
Var add(Var a, Var b) { return binary(OpKind::Add, a, b); }
Var sub(Var a, Var b) { return binary(OpKind::Sub, a, b); }
Var mul(Var a, Var b) { return binary(OpKind::Mul, a, b); }
Var div(Var a, Var b) { return binary(OpKind::Div, a, b); }
Var neg(Var a) { return unary(OpKind::Neg, a); }
Var scale(Var a, double factor) { return unary(OpKind::Scale, a, {.a = factor}); }
Var add_scalar(Var a, double offset) { return unary(OpKind::AddScalar, a, {.a = offset}); }
Var tanh(Var a) { return unary(OpKind::Tanh, a); }
Var sigmoid(Var a) { return unary(OpKind::Sigmoid, a); }
Var square(Var a) { return unary(OpKind::Square, a); }
Var sqrt(Var a) { return unary(OpKind::Sqrt, a); }
Var clamp(Var a, double lo, double hi) { return unary(OpKind::Clamp, a, {.a = lo, .b = hi}); }
Var sum(Var a) { return unary(OpKind::Sum, a); }
Var mean(Var a) { return unary(OpKind::Mean, a); }
Var weighted_sum(Var values, Var weights) { return binary(OpKind::WeightedSum, values, weights); }
Var softmax(Var logits) { return unary(OpKind::Softmax, logits); }

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
  OpAttrs attrs;
  attrs.labels = std::make_shared<const std::vector<std::size_t>>(labels.begin(), labels.end());
  return unary(OpKind::SoftmaxCrossEntropy, logits, std::move(attrs));
}

Var sum_rows(Var a) { return unary(OpKind::SumRows, a); }
Var broadcast_rows(Var a, std::size_t rows) { return unary(OpKind::BroadcastRows, a, {.count = rows}); }
Var sum_cols(Var a) { return unary(OpKind::SumCols, a); }
Var broadcast_cols(Var a, std::size_t cols) { return unary(OpKind::BroadcastCols, a, {.count = cols}); }

Var expand(Var scalar, Shape shape) {
  OpAttrs attrs;
  attrs.shape = std::move(shape);
  return unary(OpKind::Expand, scalar, std::move(attrs));
}

Var add_bias(Var x, Var bias) {
  if (x.value().rank() != 2) throw ShapeError("add_bias: expected matrix input");
  return add(x, broadcast_rows(bias, x.value().rows()));
}

Var scale_by(Var x, Var s) { return mul(x, expand(s, x.shape())); }

Var row_scale(Var x, Var per_row) {
  if (x.value().rank() != 2) throw ShapeError("row_scale: expected matrix input");
  return mul(x, broadcast_cols(per_row, x.value().cols()));
}

}  // namespace currlab::autograd
