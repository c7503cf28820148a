// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "currlab/autograd.hpp"
#include "currlab/tensor.hpp"

namespace currlab::nn {

struct MlpShape {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::size_t outputs = 0;

  std::size_t parameter_count() const {
    return inputs * hidden + hidden + hidden * outputs + outputs;
  }
  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

/// Two-layer perceptron with a tanh hidden layer.
/// Tensors are ordered {W1 [in, hidden], b1 [hidden], W2 [hidden, out], b2 [out]}.
struct Mlp {
  MlpShape shape;
  std::vector<Tensor> params;

  /// Xavier-normal weights, zero biases.
  static Mlp init(const MlpShape& shape, std::uint64_t seed);
  /// Same as init() but with the output layer zeroed.
  static Mlp init_zero_output(const MlpShape& shape, std::uint64_t seed);
};

/// Adds the parameters to `g` as variables (or constants).
std::vector<autograd::Var> bind(autograd::Graph& g, const Mlp& mlp, bool trainable = true);

/// Logits [rows, outputs] for inputs x [rows, inputs].
autograd::Var forward(autograd::Var x, std::span<const autograd::Var> params);

/// Numeric forward pass without building a graph.
Tensor logits(const Mlp& mlp, const Tensor& x);

/// argmax of each logits row.
std::vector<std::size_t> predict(const Mlp& mlp, const Tensor& x);

}  // namespace currlab::nn
