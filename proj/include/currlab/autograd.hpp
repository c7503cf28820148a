// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense double tensors.
//
// A Graph owns an append-only list of nodes; node ids are topologically
// ordered by construction. Var is a cheap handle (graph pointer + id).
// Gradients can be produced two ways:
//   * backward(): numeric reverse sweep, returns a GradientMap;
//   * grad_as_graph(): emits the reverse sweep as new forward nodes, so the
//     resulting gradients are themselves differentiable.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "currlab/tensor.hpp"

namespace currlab::autograd {

enum class OpKind : std::uint8_t {
  Leaf,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  AddScalar,
  Tanh,
  Sigmoid,
  Square,
  Sqrt,
  Clamp,
  Sum,
  Mean,
  WeightedSum,
  Softmax,
  SoftmaxCrossEntropy,
  SumRows,
  BroadcastRows,
  SumCols,
  BroadcastCols,
  Expand,
};

std::string_view op_name(OpKind op);

using NodeId = std::uint32_t;

class Graph;

class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  NodeId id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  OpKind op() const;

  friend bool operator==(const Var& a, const Var& b) {
    return a.graph_ == b.graph_ && a.id_ == b.id_;
  }

 private:
  friend class Graph;
  Var(Graph* g, NodeId id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

/// Result of a numeric reverse sweep. Nodes that received no gradient
/// (unreachable or constant) report zeros of their own shape.
class GradientMap {
 public:
  Tensor operator[](Var v) const;
  bool contains(Var v) const;

 private:
  friend class Graph;
  const Graph* graph_ = nullptr;
  std::vector<std::optional<Tensor>> grads_;
};

/// Per-node attributes that are not graph inputs.
struct OpAttrs {
  double a = 0.0;  // Scale factor, AddScalar offset, Clamp lower bound
  double b = 0.0;  // Clamp upper bound
  std::size_t count = 0;  // BroadcastRows row count, BroadcastCols column count
  Shape shape;            // Expand target shape
  std::shared_ptr<const std::vector<std::size_t>> labels;  // SoftmaxCrossEntropy
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that gradients flow into.
  Var variable(Tensor value);
  /// Leaf treated as a constant by backward().
  Var constant(Tensor value);

  /// Appends a node; checks shapes and computes its value.
  Var apply(OpKind op, std::span<const Var> inputs, OpAttrs attrs = {});

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  OpKind op(NodeId id) const { return nodes_.at(id).op; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::span<const NodeId> inputs(NodeId id) const;

  /// Reverse sweep from a scalar root.
  GradientMap backward(Var root) const;

  /// Gradients of `loss` with respect to `params`, emitted as graph nodes.
  /// Each parameter is treated as an independent variable: the sweep stops
  /// at it and does not follow its own lineage, so parameters may be
  /// non-leaf nodes (e.g. the output of a previous optimizer update).
  std::vector<Var> grad_as_graph(Var loss, std::span<const Var> params);

  /// Approximate heap footprint of stored values, in bytes.
  std::size_t value_bytes() const noexcept { return value_bytes_; }

 private:
  struct Node {
    Tensor value;
    OpKind op = OpKind::Leaf;
    std::uint8_t n_inputs = 0;
    std::array<NodeId, 2> in{};
    bool requires_grad = false;
    OpAttrs attrs;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::size_t value_bytes_ = 0;
};

/// Generic entry point for attribute-free operations.
Var forward_op(OpKind op, std::span<const Var> inputs);

// Forward operations. Inputs must belong to the same graph.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var tanh(Var a);
Var sigmoid(Var a);
Var square(Var a);
Var sqrt(Var a);
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
Var weighted_sum(Var values, Var weights);
/// Row-wise softmax of a [rows, classes] matrix.
Var softmax(Var logits);
/// Per-example cross-entropy of softmax(logits) against labels; shape [rows].
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);
/// [m, n] -> [n]
Var sum_rows(Var a);
/// [n] -> [rows, n]
Var broadcast_rows(Var a, std::size_t rows);
/// [m, n] -> [m]
Var sum_cols(Var a);
/// [m] -> [m, cols]
Var broadcast_cols(Var a, std::size_t cols);
/// [1] -> shape
Var expand(Var scalar, Shape shape);

// Composites built from the primitives above.
Var add_bias(Var x, Var bias);       // [m, n] + [n]
Var scale_by(Var x, Var scalar);     // x * s, s of shape [1]
Var row_scale(Var x, Var per_row);   // [m, n] * [m] (per row)

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }

}  // namespace currlab::autograd
