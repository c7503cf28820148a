// SPDX-License-Identifier: Apache-2.0
//
// Adam exactly as the simplified textbook form (with bias correction) plus a
// heavy-ball SGD reference. Update norms are recorded on the pre-learning-rate
// update so that learning-rate schedules do not leak into the measurement.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "currlab/tensor.hpp"

namespace currlab::optim {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Throws InvalidArgument unless lr > 0, 0 <= beta < 1, eps > 0.
  void validate() const;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;

  static AdamState zeros_like(std::span<const Tensor> params);
};

struct UpdateRecord {
  std::size_t step = 0;
  double update_norm = 0.0;  // ||delta theta||, before multiplying by lr
  double m_norm = 0.0;
  double v_norm = 0.0;
  double lr = 0.0;
};

struct AdamUpdate {
  UpdateRecord record;
  std::vector<Tensor> delta;  // pre-lr update actually applied
};

/// One Adam step: params <- params - lr * m_hat / (sqrt(v_hat) + eps).
/// Throws PoisonedStateError (leaving state and params untouched) if any
/// gradient entry is non-finite.
AdamUpdate adam_step(AdamState& state, const AdamConfig& config, std::span<const Tensor> grads,
                     std::span<Tensor> params);

struct MomentumState {
  std::vector<Tensor> momentum;
  std::size_t step = 0;

  static MomentumState zeros_like(std::span<const Tensor> params);
};

/// momentum <- beta * momentum + (1 - beta) * g;  params <- params - lr * momentum.
UpdateRecord sgd_momentum_step(MomentumState& state, double beta, double lr,
                               std::span<const Tensor> grads, std::span<Tensor> params);

enum class LrScheduleKind { Constant, SqrtWarmup };

struct LrSchedule {
  LrScheduleKind kind = LrScheduleKind::Constant;
  double base = 1e-3;
  std::size_t warmup = 0;

  /// Learning rate for step i (1-based). Square-root decay uses
  /// base * min(i / warmup, sqrt(warmup / i)); warmup 0 is treated as 1.
  double at(std::size_t i) const;
};

/// l2 norm over the concatenation of all entries.
double global_update_norm(std::span<const Tensor> tensors);

}  // namespace currlab::optim
