// SPDX-License-Identifier: Apache-2.0
//
// Single-parameter Adam driven by a deterministic gradient-magnitude schedule.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "currlab/optim.hpp"

namespace currlab::minimal_example {

enum class ScheduleKind { Ramp, Constant, Sigmoid, Custom };

struct GradientSchedule {
  ScheduleKind kind = ScheduleKind::Constant;
  std::size_t ramp_length = 1000;  // Ramp: g_i = min(i / K, 1) * plateau; Sigmoid: midpoint K/2, width K/10
  double plateau = 1.0;
  double constant = 1.0;
  std::vector<double> custom;  // Custom: g_i = custom[i - 1], held at the last value beyond its end

  static GradientSchedule ramp(std::size_t length, double plateau = 1.0);
  static GradientSchedule constant_of(double c);
  static GradientSchedule sigmoid(std::size_t length, double plateau = 1.0);
  static GradientSchedule sequence(std::vector<double> values);

  void validate() const;
  /// Gradient magnitude at step i >= 1.
  double at(std::size_t i) const;
};

/// |delta theta_i| (pre-lr) for i = 1..steps; element k is step k + 1.
std::vector<double> simulate_single_param(const GradientSchedule& schedule, const optim::AdamConfig& config,
                                          std::size_t steps);

/// Inclusive 1-based step window.
struct StepWindow {
  std::size_t first = 1;
  std::size_t last = 1;
};

/// mean(curriculum over window) / mean(baseline over window).
double boost_ratio(std::span<const double> curriculum, std::span<const double> baseline, StepWindow window);

/// First 1-based step from which every later step stays within rel_tol of
/// the baseline. Returns size() + 1 if the final step is still outside.
std::size_t settle_step(std::span<const double> curriculum, std::span<const double> baseline, double rel_tol);

}  // namespace currlab::minimal_example
