// SPDX-License-Identifier: Apache-2.0
#include "currlab/training.hpp"

#include <cmath>
#include <numeric>

#include "currlab/error.hpp"

namespace currlab::training {

namespace ag = autograd;

ConstantWeights::ConstantWeights(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) throw InvalidArgument("constant weight must lie in [0, 1]");
}

ToyWeights::ToyWeights(curricula::ToyPolicy policy) : policy_(policy) { policy_.validate(); }

std::vector<double> ToyWeights::weights(const Tensor& batch, std::size_t step, std::size_t) {
  return std::vector<double>(batch.rows(), curricula::toy_weight(policy_, static_cast<double>(step)));
}

void TrainSpec::validate() const {
  adam.validate();
  if (!(lr_schedule.base > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (hidden == 0) throw InvalidArgument("hidden width must be positive");
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (eval_interval == 0) throw InvalidArgument("eval interval must be positive");
}

double accuracy(const nn::Mlp& model, const datasets::Dataset& data) {
  if (data.empty()) throw InvalidArgument("accuracy: empty dataset");
  const auto pred = nn::predict(model, data.all_features());
  std::size_t hits = 0;
  for (std::size_t k = 0; k < data.size(); ++k) hits += pred[k] == data.examples[k].label;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double mean_cross_entropy(const nn::Mlp& model, const datasets::Dataset& data) {
  if (data.empty()) throw InvalidArgument("mean_cross_entropy: empty dataset");
  const Tensor z = nn::logits(model, data.all_features());
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double mx = z.at(r, 0);
    for (std::size_t c = 1; c < z.cols(); ++c) mx = std::max(mx, z.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) s += std::exp(z.at(r, c) - mx);
    total += mx + std::log(s) - z.at(r, data.examples[r].label);
  }
  return total / static_cast<double>(z.rows());
}

namespace {
bool all_finite(const std::vector<Tensor>& ts) {
  for (const auto& t : ts)
    if (!t.all_finite()) return false;
  return true;
}
}  // namespace

TrainOutcome train(const datasets::Dataset& train_set, const datasets::Dataset& dev_set, const TrainSpec& spec,
                   WeightProvider* weights, const DataSchedule* schedule) {
  spec.validate();
  if (train_set.empty() || dev_set.empty()) throw InvalidArgument("train: empty train or dev split");
  if (schedule && schedule->ordered.size() != train_set.size())
    throw InvalidArgument("train: ordered dataset does not match the training split");

  const nn::MlpShape shape{train_set.feature_dim, spec.hidden, std::max(train_set.classes, dev_set.classes)};
  TrainOutcome out;
  out.model = spec.zero_output_init ? nn::Mlp::init_zero_output(shape, spec.init_seed)
                                    : nn::Mlp::init(shape, spec.init_seed);
  auto state = optim::AdamState::zeros_like(out.model.params);
  curricula::BatchSampler sampler(spec.data_seed);
  auto portion_at = [&](std::size_t i) {
    return schedule ? curricula::available_portion(schedule->schedule, i) : 1.0;
  };

  TraceRow row;
  row.train_loss = mean_cross_entropy(out.model, train_set);
  row.dev_accuracy = accuracy(out.model, dev_set);
  row.data_portion = portion_at(0);
  out.trace.push_back(row);

  for (std::size_t i = 1; i <= spec.steps; ++i) {
    const double portion = portion_at(i);
    std::vector<std::size_t> batch;
    if (schedule) {
      batch = curricula::sample_batch(schedule->ordered, schedule->schedule, i, spec.batch_size, sampler);
    } else {
      batch = sampler.draw(train_set.size(), spec.batch_size);
    }
    Tensor x = train_set.features(batch);
    const auto labels = train_set.labels(batch);
    const auto w = weights ? weights->weights(x, i, spec.steps) : std::vector<double>(batch.size(), 1.0);
    if (w.size() != batch.size()) throw ShapeError("weight provider returned the wrong number of weights");

    ag::Graph g;
    const auto params = nn::bind(g, out.model);
    auto losses = ag::softmax_cross_entropy(nn::forward(g.constant(std::move(x)), params), labels);
    auto loss = curricula::weighted_loss(losses, w);
    const auto& lv = losses.value();
    const double batch_loss = std::accumulate(lv.data().begin(), lv.data().end(), 0.0) /
                              static_cast<double>(lv.size());
    if (!std::isfinite(loss.value().item()) || !std::isfinite(batch_loss)) {
      out.aborted = true;
      out.abort_reason = "non-finite loss at step " + std::to_string(i);
      return out;
    }
    const auto gm = g.backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.push_back(gm[p]);

    optim::AdamConfig cfg = spec.adam;
    cfg.lr = spec.lr_schedule.at(i);
    optim::AdamUpdate upd;
    try {
      upd = optim::adam_step(state, cfg, grads, out.model.params);
    } catch (const PoisonedStateError& e) {
      out.aborted = true;
      out.abort_reason = "step " + std::to_string(i) + ": " + e.what();
      return out;
    }
    if (!all_finite(out.model.params)) {
      out.aborted = true;
      out.abort_reason = "non-finite parameters after step " + std::to_string(i);
      return out;
    }

    const auto stats = curricula::weight_stats(w);
    row.step = i;
    row.train_loss = batch_loss;
    if (i % spec.eval_interval == 0 || i == spec.steps) row.dev_accuracy = accuracy(out.model, dev_set);
    row.update_norm = upd.record.update_norm;
    row.m_norm = upd.record.m_norm;
    row.v_norm = upd.record.v_norm;
    row.mean_weight = stats.mean;
    row.sigma_normal = stats.sigma_normal;
    row.lr = cfg.lr;
    row.data_portion = portion;
    out.trace.push_back(row);
  }
  return out;
}

}  // namespace currlab::training
