// SPDX-License-Identifier: Apache-2.0
#include "currlab/mlp.hpp"

#include <cmath>
#include <random>

#include "currlab/error.hpp"

namespace currlab::nn {

namespace ag = currlab::autograd;

namespace {
Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
  Tensor t(Shape{fan_in, fan_out});
  for (double& x : t.data()) x = dist(rng);
  return t;
}

void check_shape(const MlpShape& s) {
  if (s.inputs == 0 || s.hidden == 0 || s.outputs == 0)
    throw InvalidArgument("perceptron dimensions must be positive");
}
}  // namespace

Mlp Mlp::init(const MlpShape& shape, std::uint64_t seed) {
  check_shape(shape);
  std::mt19937_64 rng(seed);
  Mlp m{shape, {}};
  m.params.push_back(xavier(shape.inputs, shape.hidden, rng));
  m.params.emplace_back(Shape{shape.hidden});
  m.params.push_back(xavier(shape.hidden, shape.outputs, rng));
  m.params.emplace_back(Shape{shape.outputs});
  return m;
}

Mlp Mlp::init_zero_output(const MlpShape& shape, std::uint64_t seed) {
  Mlp m = init(shape, seed);
  m.params[2] = Tensor(m.params[2].shape());
  return m;
}

std::vector<ag::Var> bind(ag::Graph& g, const Mlp& mlp, bool trainable) {
  std::vector<ag::Var> out;
  out.reserve(mlp.params.size());
  for (const Tensor& t : mlp.params) out.push_back(trainable ? g.variable(t) : g.constant(t));
  return out;
}

ag::Var forward(ag::Var x, std::span<const ag::Var> p) {
  if (p.size() != 4) throw ShapeError("perceptron expects 4 parameter tensors");
  ag::Var hidden = ag::tanh(ag::add_bias(ag::matmul(x, p[0]), p[1]));
  return ag::add_bias(ag::matmul(hidden, p[2]), p[3]);
}

Tensor logits(const Mlp& mlp, const Tensor& x) {
  const auto& W1 = mlp.params[0];
  const auto& b1 = mlp.params[1];
  const auto& W2 = mlp.params[2];
  const auto& b2 = mlp.params[3];
  if (x.rank() != 2 || x.cols() != mlp.shape.inputs)
    throw ShapeError("perceptron input has shape " + shape_string(x.shape()) + ", expected [*, " +
                     std::to_string(mlp.shape.inputs) + "]");
  const std::size_t n = x.rows(), h = mlp.shape.hidden, c = mlp.shape.outputs;
  Tensor out(Shape{n, c});
  std::vector<double> hid(h);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < h; ++j) hid[j] = 0.0;
    for (std::size_t p = 0; p < mlp.shape.inputs; ++p) {
      const double xp = x.at(r, p);
      for (std::size_t j = 0; j < h; ++j) hid[j] += xp * W1.at(p, j);
    }
    for (std::size_t j = 0; j < h; ++j) hid[j] = std::tanh(hid[j] + b1[j]);
    for (std::size_t k = 0; k < c; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < h; ++j) s += hid[j] * W2.at(j, k);
      out.at(r, k) = s + b2[k];
    }
  }
  return out;
}

std::vector<std::size_t> predict(const Mlp& mlp, const Tensor& x) {
  const Tensor z = logits(mlp, x);
  std::vector<std::size_t> out(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < z.cols(); ++k)
      if (z.at(r, k) > z.at(r, best)) best = k;
    out[r] = best;
  }
  return out;
}

}  // namespace currlab::nn
