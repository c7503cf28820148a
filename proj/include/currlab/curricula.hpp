// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "currlab/autograd.hpp"
#include "currlab/datasets.hpp"
#include "currlab/mlp.hpp"

namespace currlab::curricula {

enum class ToyKind { LinearUp, LinearDown, Constant, Sigmoid };

struct ToyPolicy {
  ToyKind kind = ToyKind::Constant;
  double kappa = 2000.0;  // ramp length for linear kinds, slope for sigmoid
  double lambda = 1000.0;  // sigmoid midpoint

  /// kappa defaults to 2000 for linear kinds and 0.005 for sigmoid.
  static ToyPolicy make(ToyKind kind);
  void validate() const;
};

/// Always in [0, 1].
double toy_weight(const ToyPolicy& policy, double step);

/// Every entry replaced by the batch mean.
std::vector<double> batch_mean_ablation(std::span<const double> weights);

struct ScheduleFunction {
  double start_portion = 0.3;
  double step_size = 0.1;
  std::size_t increment = 300;

  void validate() const;
};

double available_portion(const ScheduleFunction& schedule, std::size_t step);

/// ceil(portion * n), robust to round-off in portion * n, at least 1 if n > 0.
std::size_t prefix_size(double portion, std::size_t n);

enum class DifficultyMeasure { SequenceLength, ReferenceLoss };

struct OrderedEntry {
  std::size_t original_index = 0;
  double score = 0.0;
};

/// Entries sorted by score ascending; ties keep original order.
struct OrderedDataset {
  std::vector<OrderedEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
};

double difficulty_score(const datasets::Example& example, DifficultyMeasure measure, std::size_t index);

OrderedDataset order_by_difficulty(const datasets::Dataset& dataset, DifficultyMeasure measure);

/// Uniform-with-replacement sampler over a prefix of an ordered dataset.
/// Each draw consumes exactly one generator output, so two samplers with the
/// same seed stay aligned even when their prefixes differ.
class BatchSampler {
 public:
  explicit BatchSampler(std::uint64_t seed) : rng_(seed) {}

  /// Positions in [0, prefix).
  std::vector<std::size_t> draw(std::size_t prefix, std::size_t batch_size);

 private:
  std::mt19937_64 rng_;
};

/// Original dataset indices of a batch drawn from the available prefix.
std::vector<std::size_t> sample_batch(const OrderedDataset& ordered, const ScheduleFunction& schedule,
                                      std::size_t step, std::size_t batch_size, BatchSampler& sampler);

/// Mean over the batch of weights[k] * losses[k].
autograd::Var weighted_loss(autograd::Var losses, autograd::Var weights);
autograd::Var weighted_loss(autograd::Var losses, std::span<const double> weights);

struct WeightStats {
  double mean = 0.0;
  double sigma_normal = 0.0;  // population std / mean; 0 when the mean is 0
};

WeightStats weight_stats(std::span<const double> weights);

/// Throws UndefinedStatistic if either input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// ||d loss_k / d theta|| for every example of the dataset.
std::vector<double> per_example_gradient_norms(const datasets::Dataset& dataset, const nn::Mlp& model);

double difficulty_gradient_correlation(const datasets::Dataset& dataset, const nn::Mlp& model,
                                       DifficultyMeasure measure);

}  // namespace currlab::curricula
