// SPDX-License-Identifier: Apache-2.0
#include "currlab/minimal_example.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "currlab/error.hpp"

namespace currlab::minimal_example {

GradientSchedule GradientSchedule::ramp(std::size_t length, double plateau) {
  GradientSchedule s;
  s.kind = ScheduleKind::Ramp;
  s.ramp_length = length;
  s.plateau = plateau;
  return s;
}

GradientSchedule GradientSchedule::constant_of(double c) {
  GradientSchedule s;
  s.kind = ScheduleKind::Constant;
  s.constant = c;
  return s;
}

GradientSchedule GradientSchedule::sigmoid(std::size_t length, double plateau) {
  GradientSchedule s = ramp(length, plateau);
  s.kind = ScheduleKind::Sigmoid;
  return s;
}

GradientSchedule GradientSchedule::sequence(std::vector<double> values) {
  GradientSchedule s;
  s.kind = ScheduleKind::Custom;
  s.custom = std::move(values);
  return s;
}

void GradientSchedule::validate() const {
  auto ok = [](double x) { return std::isfinite(x) && x >= 0.0; };
  switch (kind) {
    case ScheduleKind::Ramp:
    case ScheduleKind::Sigmoid:
      if (ramp_length == 0) throw InvalidArgument("gradient schedule: ramp length must be positive");
      if (!ok(plateau)) throw InvalidArgument("gradient schedule: plateau must be finite and >= 0");
      break;
    case ScheduleKind::Constant:
      if (!ok(constant)) throw InvalidArgument("gradient schedule: constant must be finite and >= 0");
      break;
    case ScheduleKind::Custom:
      if (custom.empty()) throw InvalidArgument("gradient schedule: custom sequence is empty");
      for (double g : custom)
        if (!ok(g)) throw InvalidArgument("gradient schedule: custom magnitudes must be finite and >= 0");
      break;
  }
}

double GradientSchedule::at(std::size_t i) const {
  switch (kind) {
    case ScheduleKind::Ramp:
      return std::min(static_cast<double>(i) / static_cast<double>(ramp_length), 1.0) * plateau;
    case ScheduleKind::Constant:
      return constant;
    case ScheduleKind::Sigmoid: {
      const double k = static_cast<double>(ramp_length);
      const double z = (static_cast<double>(i) - 0.5 * k) * (10.0 / k);
      return plateau / (1.0 + std::exp(-z));
    }
    case ScheduleKind::Custom:
      return custom[std::min(i, custom.size()) - 1];
  }
  return 0.0;
}

std::vector<double> simulate_single_param(const GradientSchedule& schedule, const optim::AdamConfig& config,
                                          std::size_t steps) {
  schedule.validate();
  config.validate();
  if (steps == 0) throw InvalidArgument("simulate_single_param: horizon must be at least one step");
  std::vector<Tensor> theta{Tensor::scalar(0.0)};
  auto state = optim::AdamState::zeros_like(theta);
  std::vector<Tensor> grad{Tensor::scalar(0.0)};
  std::vector<double> trace;
  trace.reserve(steps);
  for (std::size_t i = 1; i <= steps; ++i) {
    grad[0][0] = schedule.at(i);
    const auto update = optim::adam_step(state, config, grad, theta);
    trace.push_back(std::abs(update.delta[0][0]));
  }
  return trace;
}

double boost_ratio(std::span<const double> curriculum, std::span<const double> baseline, StepWindow w) {
  if (curriculum.size() != baseline.size()) throw InvalidArgument("boost_ratio: traces differ in length");
  if (w.first == 0 || w.first > w.last || w.last > curriculum.size())
    throw InvalidArgument("boost_ratio: empty or out-of-range window [" + std::to_string(w.first) + ", " +
                          std::to_string(w.last) + "]");
  double num = 0.0, den = 0.0;
  for (std::size_t i = w.first; i <= w.last; ++i) {
    num += curriculum[i - 1];
    den += baseline[i - 1];
  }
  if (den == 0.0) throw UndefinedStatistic("boost_ratio: baseline is zero over the window");
  return num / den;
}

std::size_t settle_step(std::span<const double> curriculum, std::span<const double> baseline, double rel_tol) {
  if (curriculum.size() != baseline.size()) throw InvalidArgument("settle_step: traces differ in length");
  std::size_t i = curriculum.size();
  while (i > 0 && std::abs(curriculum[i - 1] - baseline[i - 1]) <= rel_tol * std::abs(baseline[i - 1])) --i;
  return i + 1;
}

}  // namespace currlab::minimal_example
