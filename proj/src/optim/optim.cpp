// SPDX-License-Identifier: Apache-2.0
#include "currlab/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "currlab/error.hpp"

namespace currlab::optim {

void AdamConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("adam: learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidArgument("adam: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("adam: beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw InvalidArgument("adam: eps must be > 0");
}

AdamState AdamState::zeros_like(std::span<const Tensor> params) {
  AdamState s;
  for (const Tensor& p : params) {
    s.m.emplace_back(p.shape());
    s.v.emplace_back(p.shape());
  }
  return s;
}

namespace {
void check_pairing(std::span<const Tensor> grads, std::span<Tensor> params, std::size_t slots) {
  if (grads.size() != params.size() || slots != params.size())
    throw ShapeError("optimizer: gradient/parameter/state counts differ");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (!grads[k].same_shape(params[k]))
      throw ShapeError("optimizer: gradient " + std::to_string(k) + " has shape " +
                       shape_string(grads[k].shape()) + ", parameter has " +
                       shape_string(params[k].shape()));
}

void check_finite(std::span<const Tensor> grads) {
  for (std::size_t k = 0; k < grads.size(); ++k)
    if (!grads[k].all_finite())
      throw PoisonedStateError("optimizer: non-finite gradient in tensor " + std::to_string(k));
}
}  // namespace

AdamUpdate adam_step(AdamState& state, const AdamConfig& config, std::span<const Tensor> grads,
                     std::span<Tensor> params) {
  config.validate();
  check_pairing(grads, params, state.m.size());
  if (state.v.size() != state.m.size()) throw ShapeError("adam: corrupted state");
  check_finite(grads);

  const std::size_t i = state.step + 1;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(i));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(i));

  AdamUpdate out;
  out.delta.reserve(params.size());
  double dsq = 0.0, msq = 0.0, vsq = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    const Tensor& g = grads[k];
    Tensor delta(g.shape());
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      delta[j] = m_hat / (std::sqrt(v_hat) + config.eps);
      params[k][j] -= config.lr * delta[j];
      dsq += delta[j] * delta[j];
      msq += m[j] * m[j];
      vsq += v[j] * v[j];
    }
    out.delta.push_back(std::move(delta));
  }
  state.step = i;
  out.record = UpdateRecord{i, std::sqrt(dsq), std::sqrt(msq), std::sqrt(vsq), config.lr};
  return out;
}

MomentumState MomentumState::zeros_like(std::span<const Tensor> params) {
  MomentumState s;
  for (const Tensor& p : params) s.momentum.emplace_back(p.shape());
  return s;
}

UpdateRecord sgd_momentum_step(MomentumState& state, double beta, double lr,
                               std::span<const Tensor> grads, std::span<Tensor> params) {
  if (!(beta >= 0.0 && beta < 1.0)) throw InvalidArgument("sgd: beta must lie in [0, 1)");
  if (!(lr > 0.0)) throw InvalidArgument("sgd: learning rate must be > 0");
  check_pairing(grads, params, state.momentum.size());
  check_finite(grads);

  double usq = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& mom = state.momentum[k];
    for (std::size_t j = 0; j < mom.size(); ++j) {
      mom[j] = beta * mom[j] + (1.0 - beta) * grads[k][j];
      params[k][j] -= lr * mom[j];
      usq += mom[j] * mom[j];
    }
  }
  state.step += 1;
  const double norm = std::sqrt(usq);
  return UpdateRecord{state.step, norm, norm, 0.0, lr};
}

double LrSchedule::at(std::size_t i) const {
  if (i == 0) throw InvalidArgument("lr schedule: steps are 1-based");
  if (kind == LrScheduleKind::Constant) return base;
  const double w = static_cast<double>(std::max<std::size_t>(warmup, 1));
  const double s = static_cast<double>(i);
  return base * std::min(s / w, std::sqrt(w / s));
}

double global_update_norm(std::span<const Tensor> tensors) {
  if (tensors.empty()) throw InvalidArgument("global_update_norm: no tensors");
  double s = 0.0;
  for (const Tensor& t : tensors)
    for (double x : t.data()) s += x * x;
  return std::sqrt(s);
}

}  // namespace currlab::optim
