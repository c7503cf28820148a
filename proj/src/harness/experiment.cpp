// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "currlab/error.hpp"
#include "currlab/harness.hpp"

namespace currlab::harness {

namespace {

std::uint64_t data_seed_for(std::uint64_t seed) { return seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL; }

template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t k = 0; k < n; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (std::size_t k; (k = next++) < n;) {
        try {
          body(k);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

nn::Mlp train_reference_model(const datasets::Dataset& train_set, const datasets::Dataset& dev_set,
                              const ReferenceConfig& rc) {
  training::TrainSpec spec;
  spec.hidden = rc.hidden;
  spec.lr_schedule.base = rc.lr;
  spec.adam.lr = rc.lr;
  spec.batch_size = rc.batch_size;
  spec.steps = rc.steps;
  spec.eval_interval = std::max<std::size_t>(rc.steps, 1);
  spec.init_seed = rc.seed;
  spec.data_seed = data_seed_for(rc.seed);
  auto outcome = training::train(train_set, dev_set, spec);
  if (outcome.aborted) throw Error("reference model training aborted: " + outcome.abort_reason);
  return outcome.model;
}

PreparedData prepare(const ExperimentConfig& config) {
  config.validate();
  datasets::Dataset all = config.data.kind == DataKind::Csv ? datasets::load_csv(config.data.path)
                                                            : datasets::generate(config.data.synthetic);
  PreparedData out;
  out.splits = datasets::split(all, config.data.split, config.data.split_seed);
  if (out.splits.train.empty() || out.splits.dev.empty())
    throw InvalidArgument("config: train and dev splits must both be non-empty");

  const auto& cur = config.curriculum;
  if (cur.kind == CurriculumKind::HandCrafted) {
    auto& train = out.splits.train;
    if (cur.measure == curricula::DifficultyMeasure::ReferenceLoss) {
      const bool provided = std::all_of(train.examples.begin(), train.examples.end(),
                                        [](const datasets::Example& e) { return e.reference_loss.has_value(); });
      if (!provided)
        train = datasets::compute_reference_losses(train, train_reference_model(train, out.splits.dev, config.reference));
    }
    out.schedule = training::DataSchedule{curricula::order_by_difficulty(train, cur.measure), cur.schedule};
  }
  if (cur.kind == CurriculumKind::Commentaries || cur.kind == CurriculumKind::AblatedCommentaries) {
    out.teacher = commentaries::load_teacher(cur.teacher_path);
    if (out.teacher->feature_dim() != out.splits.train.feature_dim)
      throw ShapeError("teacher expects " + std::to_string(out.teacher->feature_dim()) + " features, data has " +
                       std::to_string(out.splits.train.feature_dim));
  }
  return out;
}

RunResult run_single(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed) {
  training::TrainSpec spec = config.train;
  spec.init_seed = seed;
  spec.data_seed = data_seed_for(seed);

  std::unique_ptr<training::WeightProvider> weights;
  const training::DataSchedule* schedule = nullptr;
  switch (config.curriculum.kind) {
    case CurriculumKind::None: break;
    case CurriculumKind::Toy: weights = std::make_unique<training::ToyWeights>(config.curriculum.toy); break;
    case CurriculumKind::HandCrafted:
      if (!data.schedule) throw InvalidArgument("hand-crafted curriculum without prepared ordering");
      schedule = &*data.schedule;
      break;
    case CurriculumKind::Commentaries:
    case CurriculumKind::AblatedCommentaries:
      if (!data.teacher) throw InvalidArgument("commentaries curriculum without a loaded teacher");
      weights = std::make_unique<commentaries::TeacherWeights>(
          *data.teacher, config.curriculum.kind == CurriculumKind::AblatedCommentaries);
      break;
  }

  auto outcome = training::train(data.splits.train, data.splits.dev, spec, weights.get(), schedule);
  RunResult r;
  r.seed = seed;
  r.aborted = outcome.aborted;
  r.abort_reason = outcome.abort_reason;
  r.final_dev_accuracy = outcome.trace.back().dev_accuracy;
  if (!r.aborted) r.steps_to_convergence = steps_to_convergence(outcome.trace, config.convergence_fraction);
  r.trace = std::move(outcome.trace);
  r.model = std::move(outcome.model);
  return r;
}

std::vector<RunResult> run_experiment(const ExperimentConfig& config, const PreparedData& data) {
  std::vector<RunResult> results(config.seeds.size());
  parallel_for(config.seeds.size(), config.jobs,
               [&](std::size_t k) { results[k] = run_single(config, data, config.seeds[k]); });
  return results;
}

commentaries::PretrainResult pretrain_from_config(const ExperimentConfig& config, const PreparedData& data) {
  const auto& t = config.teacher;
  commentaries::PracticeConfig practice;
  practice.inner_steps = t.inner_steps;
  practice.inner = config.train.adam;
  practice.inner.lr = t.inner_lr;
  practice.hidden = t.practice_hidden;
  practice.batch_size = t.batch_size;
  practice.guard_limit = t.guard_limit;
  practice.train = &data.splits.train;
  practice.dev = &data.splits.dev;

  commentaries::TeacherTrainConfig outer;
  outer.iterations = t.iterations;
  outer.outer.lr = t.outer_lr;
  outer.reinit = t.reinit;
  outer.teacher_hidden = t.teacher_hidden;
  outer.seed = t.seed;
  return commentaries::pretrain_teacher(outer, practice);
}

std::optional<std::size_t> steps_to_convergence(std::span<const std::size_t> steps, std::span<const double> acc,
                                                double fraction) {
  if (steps.size() != acc.size()) throw InvalidArgument("steps_to_convergence: length mismatch");
  if (acc.empty()) return std::nullopt;
  const double threshold = fraction * acc.back();
  for (std::size_t k = 0; k < acc.size(); ++k)
    if (acc[k] >= threshold) return steps[k];
  return std::nullopt;
}

std::optional<std::size_t> steps_to_convergence(const training::TrainTrace& trace, double fraction) {
  std::vector<std::size_t> steps;
  std::vector<double> acc;
  for (const auto& row : trace) {
    steps.push_back(row.step);
    acc.push_back(row.dev_accuracy);
  }
  return steps_to_convergence(steps, acc, fraction);
}

double accuracy_at(const training::TrainTrace& trace, std::size_t step) {
  if (trace.empty()) throw InvalidArgument("accuracy_at: empty trace");
  double acc = trace.front().dev_accuracy;
  for (const auto& row : trace) {
    if (row.step > step) break;
    acc = row.dev_accuracy;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------
double mean_of(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_std(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

WelchResult welch_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InvalidArgument("welch_test: need at least two values per sample");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = std::pow(sample_std(a), 2) / na, vb = std::pow(sample_std(b), 2) / nb;
  WelchResult r;
  if (va + vb == 0.0) {
    r.t = ma == mb ? 0.0 : std::copysign(INFINITY, ma - mb);
    r.df = na + nb - 2.0;
    r.p = ma == mb ? 1.0 : 0.0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  boost::math::students_t dist(r.df);
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

// ---------------------------------------------------------------------------
// Beta diagnostic
// ---------------------------------------------------------------------------
namespace {

ArmSummary summarize(const std::string& label, const std::vector<RunResult>& runs, std::size_t probe,
                     std::size_t steps, bool& aborted) {
  ArmSummary s;
  s.label = label;
  s.mean_update_norm_trace.assign(steps, 0.0);
  for (const auto& r : runs) {
    aborted = aborted || r.aborted;
    s.probe_accuracy.push_back(accuracy_at(r.trace, probe));
    for (std::size_t k = 1; k < r.trace.size(); ++k)
      s.mean_update_norm_trace[r.trace[k].step - 1] += r.trace[k].update_norm / static_cast<double>(runs.size());
  }
  s.mean = mean_of(s.probe_accuracy);
  s.std = sample_std(s.probe_accuracy);
  return s;
}

double window_ratio(const std::vector<double>& a, const std::vector<double>& b, std::size_t last) {
  last = std::min(last, a.size());
  if (last == 0) return 1.0;
  const double num = std::accumulate(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(last), 0.0);
  const double den = std::accumulate(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(last), 0.0);
  return den == 0.0 ? 1.0 : num / den;
}

}  // namespace

BetaDiagnostic beta_diagnostic(const ExperimentConfig& config, const PreparedData& data) {
  if (config.curriculum.kind == CurriculumKind::None)
    throw InvalidArgument("beta diagnostic needs a curriculum to compare against the baseline");
  if (config.seeds.size() < 2) throw InvalidArgument("beta diagnostic needs at least two seeds");

  ExperimentConfig curriculum = config;
  ExperimentConfig baseline = config;
  baseline.curriculum.kind = CurriculumKind::None;
  ExperimentConfig curriculum_eq = curriculum, baseline_eq = baseline;
  for (auto* c : {&curriculum_eq, &baseline_eq}) c->train.adam.beta1 = c->train.adam.beta2 = config.equal_beta;

  BetaDiagnostic d;
  d.probe_step = config.effective_probe_step();
  const std::size_t steps = config.train.steps;
  d.curriculum_default = summarize("curriculum/default", run_experiment(curriculum, data), d.probe_step, steps, d.any_aborted);
  d.baseline_default = summarize("baseline/default", run_experiment(baseline, data), d.probe_step, steps, d.any_aborted);
  d.curriculum_equal = summarize("curriculum/equal", run_experiment(curriculum_eq, data), d.probe_step, steps, d.any_aborted);
  d.baseline_equal = summarize("baseline/equal", run_experiment(baseline_eq, data), d.probe_step, steps, d.any_aborted);

  d.gap_default = d.curriculum_default.mean - d.baseline_default.mean;
  d.gap_equal = d.curriculum_equal.mean - d.baseline_equal.mean;
  d.test_default = welch_test(d.curriculum_default.probe_accuracy, d.baseline_default.probe_accuracy);
  d.test_equal = welch_test(d.curriculum_equal.probe_accuracy, d.baseline_equal.probe_accuracy);
  d.boost_default = window_ratio(d.curriculum_default.mean_update_norm_trace,
                                 d.baseline_default.mean_update_norm_trace, d.probe_step);
  d.boost_equal = window_ratio(d.curriculum_equal.mean_update_norm_trace, d.baseline_equal.mean_update_norm_trace,
                               d.probe_step);
  return d;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------
GridSpace grid_space_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("grid space must be an object of key path -> list");
  GridSpace space;
  for (const auto& [key, values] : j.items()) {
    if (!values.is_array() || values.empty())
      throw InvalidArgument("grid space entry '" + key + "' must be a non-empty list");
    space.emplace_back(key, std::vector<nlohmann::json>(values.begin(), values.end()));
  }
  return space;
}

namespace {

void set_path(nlohmann::json& j, const std::string& path, const nlohmann::json& value) {
  nlohmann::json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) throw InvalidArgument("grid space: unknown config key '" + path + "'");
    cur = &(*cur)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *cur = value;
}

struct Candidate {
  std::string label;
  ExperimentConfig config;
};

}  // namespace

GridResult grid_search(const ExperimentConfig& base, const GridSpace& space) {
  if (space.empty()) throw InvalidArgument("grid search: empty config space");
  std::vector<Candidate> candidates;
  std::vector<std::size_t> idx(space.size(), 0);
  const nlohmann::json base_json = config_to_json(base);
  while (true) {
    nlohmann::json j = base_json;
    std::string label;
    for (std::size_t f = 0; f < space.size(); ++f) {
      set_path(j, space[f].first, space[f].second[idx[f]]);
      label += (f ? ", " : "") + space[f].first + "=" + space[f].second[idx[f]].dump();
    }
    candidates.push_back({label, config_from_json(j)});
    std::size_t f = space.size();
    while (f > 0 && ++idx[f - 1] == space[f - 1].second.size()) idx[--f] = 0;
    if (f == 0) break;
  }

  GridResult out;
  struct Score {
    double selection = 0.0;
    double report = 0.0;
    double steps = 0.0;
  };
  std::map<std::string, Score> scores;
  for (const auto& cand : candidates) {
    PreparedData data = prepare(cand.config);
    auto [selection, report] = datasets::halve(data.splits.dev, cand.config.data.split_seed + 1);
    data.splits.dev = selection;
    const auto runs = run_experiment(cand.config, data);
    Score s;
    for (const auto& r : runs) {
      GridRow row;
      row.label = cand.label;
      row.seed = r.seed;
      row.selection_accuracy = r.final_dev_accuracy;
      row.report_accuracy = training::accuracy(r.model, report);
      row.steps_to_convergence = r.steps_to_convergence;
      row.aborted = r.aborted;
      s.selection += row.selection_accuracy / static_cast<double>(runs.size());
      s.report += row.report_accuracy / static_cast<double>(runs.size());
      s.steps += static_cast<double>(r.steps_to_convergence.value_or(cand.config.train.steps + 1)) /
                 static_cast<double>(runs.size());
      out.table.push_back(row);
    }
    scores[cand.label] = s;
  }

  const Candidate* best = nullptr;
  for (const auto& cand : candidates) {
    if (!best) {
      best = &cand;
      continue;
    }
    const Score& a = scores[cand.label];
    const Score& b = scores[best->label];
    if (a.selection != b.selection ? a.selection > b.selection
                                   : a.steps != b.steps ? a.steps < b.steps : cand.label < best->label)
      best = &cand;
  }
  out.best_label = best->label;
  out.best = best->config;
  out.best_selection_mean = scores[best->label].selection;
  out.best_report_mean = scores[best->label].report;
  return out;
}

}  // namespace currlab::harness
