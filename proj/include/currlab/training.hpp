// SPDX-License-Identifier: Apache-2.0
//
// Instrumented student training loop shared by every curriculum kind.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "currlab/curricula.hpp"
#include "currlab/datasets.hpp"
#include "currlab/mlp.hpp"
#include "currlab/optim.hpp"

namespace currlab::training {

struct TraceRow {
  std::size_t step = 0;
  double train_loss = 0.0;    // unweighted batch mean cross-entropy (row 0: full train split)
  double dev_accuracy = 0.0;  // latest evaluation, carried forward between evaluations
  double update_norm = 0.0;
  double m_norm = 0.0;
  double v_norm = 0.0;
  double mean_weight = 0.0;
  double sigma_normal = 0.0;
  double lr = 0.0;
  double data_portion = 1.0;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

using TrainTrace = std::vector<TraceRow>;

/// Per-example loss weights for one batch. Implementations must return
/// values in [0, 1], one per row of `batch_features`.
class WeightProvider {
 public:
  virtual ~WeightProvider() = default;
  virtual std::vector<double> weights(const Tensor& batch_features, std::size_t step, std::size_t total_steps) = 0;
};

class ConstantWeights final : public WeightProvider {
 public:
  explicit ConstantWeights(double value);
  std::vector<double> weights(const Tensor& batch, std::size_t, std::size_t) override {
    return std::vector<double>(batch.rows(), value_);
  }

 private:
  double value_;
};

class ToyWeights final : public WeightProvider {
 public:
  explicit ToyWeights(curricula::ToyPolicy policy);
  std::vector<double> weights(const Tensor& batch, std::size_t step, std::size_t) override;

 private:
  curricula::ToyPolicy policy_;
};

/// Ordered data plus the schedule deciding how much of it is available.
struct DataSchedule {
  curricula::OrderedDataset ordered;
  curricula::ScheduleFunction schedule;
};

struct TrainSpec {
  std::size_t hidden = 16;
  /// Zeroed output layer: every seed starts from the same (chance-level)
  /// predictions, so progress reflects optimisation rather than init luck.
  bool zero_output_init = false;
  optim::AdamConfig adam;  // adam.lr is ignored; the learning rate comes from lr_schedule
  optim::LrSchedule lr_schedule;
  std::size_t batch_size = 32;
  std::size_t steps = 1000;
  std::size_t eval_interval = 50;
  std::uint64_t init_seed = 0;
  std::uint64_t data_seed = 0;

  void validate() const;
};

struct TrainOutcome {
  TrainTrace trace;
  nn::Mlp model;
  bool aborted = false;
  std::string abort_reason;
};

double accuracy(const nn::Mlp& model, const datasets::Dataset& data);
double mean_cross_entropy(const nn::Mlp& model, const datasets::Dataset& data);

/// Trains a fresh student. `weights` may be null (unit weights); `schedule`
/// may be null (uniform sampling over the whole training set). Non-finite
/// losses or updates abort the run; the trace up to that point is returned.
TrainOutcome train(const datasets::Dataset& train_set, const datasets::Dataset& dev_set, const TrainSpec& spec,
                   WeightProvider* weights = nullptr, const DataSchedule* schedule = nullptr);

}  // namespace currlab::training
