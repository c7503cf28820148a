// SPDX-License-Identifier: Apache-2.0
#include "currlab/curricula.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "currlab/error.hpp"

namespace currlab::curricula {

namespace ag = autograd;

ToyPolicy ToyPolicy::make(ToyKind kind) {
  ToyPolicy p;
  p.kind = kind;
  if (kind == ToyKind::Sigmoid) p.kappa = 0.005;
  return p;
}

void ToyPolicy::validate() const {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw InvalidArgument("toy policy: kappa must be positive");
  if (!std::isfinite(lambda)) throw InvalidArgument("toy policy: lambda must be finite");
}

double toy_weight(const ToyPolicy& p, double step) {
  switch (p.kind) {
    case ToyKind::LinearUp:
      return std::clamp(step / p.kappa, 0.0, 1.0);
    case ToyKind::LinearDown:
      return std::clamp(1.0 - step / p.kappa, 0.0, 1.0);
    case ToyKind::Constant:
      return 0.5;
    case ToyKind::Sigmoid: {
      const double z = (step - p.lambda) * p.kappa;
      return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
  }
  return 0.5;
}

std::vector<double> batch_mean_ablation(std::span<const double> w) {
  if (w.empty()) throw InvalidArgument("batch_mean_ablation: empty batch");
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  return std::vector<double>(w.size(), mean);
}

void ScheduleFunction::validate() const {
  if (!(start_portion > 0.0 && start_portion <= 1.0))
    throw InvalidArgument("schedule: start_portion must be in (0, 1]");
  if (!(step_size > 0.0 && step_size <= 1.0)) throw InvalidArgument("schedule: step_size must be in (0, 1]");
  if (increment == 0) throw InvalidArgument("schedule: increment must be positive");
}

double available_portion(const ScheduleFunction& s, std::size_t step) {
  s.validate();
  const double stages = static_cast<double>(step / s.increment);
  return std::min(1.0, s.start_portion + s.step_size * stages);
}

std::size_t prefix_size(double portion, std::size_t n) {
  if (n == 0) return 0;
  const double exact = portion * static_cast<double>(n);
  const double nearest = std::round(exact);
  const double k = std::abs(exact - nearest) < 1e-9 ? nearest : std::ceil(exact);
  return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, n);
}

double difficulty_score(const datasets::Example& e, DifficultyMeasure measure, std::size_t index) {
  if (measure == DifficultyMeasure::SequenceLength) {
    if (!e.sequence_length)
      throw InvalidArgument("example " + std::to_string(index) + " has no sequence_length");
    return static_cast<double>(*e.sequence_length);
  }
  if (!e.reference_loss) throw InvalidArgument("example " + std::to_string(index) + " has no reference_loss");
  return *e.reference_loss;
}

OrderedDataset order_by_difficulty(const datasets::Dataset& d, DifficultyMeasure measure) {
  OrderedDataset out;
  out.entries.reserve(d.size());
  for (std::size_t k = 0; k < d.size(); ++k) out.entries.push_back({k, difficulty_score(d.examples[k], measure, k)});
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const OrderedEntry& a, const OrderedEntry& b) { return a.score < b.score; });
  return out;
}

std::vector<std::size_t> BatchSampler::draw(std::size_t prefix, std::size_t batch_size) {
  if (prefix == 0) throw InvalidArgument("sampler: empty prefix");
  std::vector<std::size_t> out(batch_size);
  for (auto& k : out) {
    const double u = std::generate_canonical<double, 53>(rng_);
    k = std::min(prefix - 1, static_cast<std::size_t>(u * static_cast<double>(prefix)));
  }
  return out;
}

std::vector<std::size_t> sample_batch(const OrderedDataset& ordered, const ScheduleFunction& schedule,
                                      std::size_t step, std::size_t batch_size, BatchSampler& sampler) {
  if (ordered.entries.empty()) throw InvalidArgument("sample_batch: empty dataset");
  const std::size_t prefix = prefix_size(available_portion(schedule, step), ordered.size());
  auto positions = sampler.draw(prefix, batch_size);
  for (auto& p : positions) p = ordered.entries[p].original_index;
  return positions;
}

ag::Var weighted_loss(ag::Var losses, ag::Var weights) {
  if (losses.shape() != weights.shape() || losses.shape().size() != 1)
    throw ShapeError("weighted_loss: losses " + shape_string(losses.shape()) + " vs weights " +
                     shape_string(weights.shape()));
  return ag::scale(ag::weighted_sum(losses, weights), 1.0 / static_cast<double>(losses.shape()[0]));
}

ag::Var weighted_loss(ag::Var losses, std::span<const double> weights) {
  for (double w : weights)
    if (!(w >= 0.0 && w <= 1.0)) throw InvalidArgument("weighted_loss: weights must lie in [0, 1]");
  if (losses.shape() != Shape{weights.size()})
    throw ShapeError("weighted_loss: " + std::to_string(weights.size()) + " weights for losses " +
                     shape_string(losses.shape()));
  auto w = losses.graph().constant(Tensor(Shape{weights.size()}, std::vector<double>(weights.begin(), weights.end())));
  return weighted_loss(losses, w);
}

WeightStats weight_stats(std::span<const double> w) {
  if (w.empty()) throw InvalidArgument("weight_stats: empty batch");
  const double n = static_cast<double>(w.size());
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : w) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / n);
  return {mean, mean == 0.0 ? 0.0 : sd / mean};
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
  if (x.size() < 2) throw UndefinedStatistic("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw UndefinedStatistic("correlation undefined: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> per_example_gradient_norms(const datasets::Dataset& d, const nn::Mlp& model) {
  if (model.shape.inputs != d.feature_dim) throw ShapeError("model/dataset feature dimension mismatch");
  std::vector<double> norms(d.size());
  for (std::size_t k = 0; k < d.size(); ++k) {
    ag::Graph g;
    const auto params = nn::bind(g, model);
    const std::size_t idx[] = {k};
    auto x = g.constant(d.features(idx));
    const auto labels = d.labels(idx);
    auto loss = ag::sum(ag::softmax_cross_entropy(nn::forward(x, params), labels));
    const auto grads = g.backward(loss);
    double ss = 0.0;
    for (const auto& p : params) {
      const Tensor gp = grads[p];
      for (double v : gp.data()) ss += v * v;
    }
    norms[k] = std::sqrt(ss);
  }
  return norms;
}

double difficulty_gradient_correlation(const datasets::Dataset& d, const nn::Mlp& model,
                                       DifficultyMeasure measure) {
  std::vector<double> scores(d.size());
  for (std::size_t k = 0; k < d.size(); ++k) scores[k] = difficulty_score(d.examples[k], measure, k);
  return pearson(scores, per_example_gradient_norms(d, model));
}

}  // namespace currlab::curricula
