// SPDX-License-Identifier: Apache-2.0
#include "currlab/commentaries.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "currlab/curricula.hpp"
#include "currlab/error.hpp"

namespace currlab::commentaries {

namespace ag = autograd;

Teacher Teacher::init(std::size_t feature_dim, std::size_t hidden, std::uint64_t seed) {
  return Teacher{nn::Mlp::init_zero_output({feature_dim + 1, hidden, 1}, seed)};
}

Teacher Teacher::random(std::size_t feature_dim, std::size_t hidden, std::uint64_t seed) {
  return Teacher{nn::Mlp::init({feature_dim + 1, hidden, 1}, seed)};
}

Tensor teacher_inputs(const Tensor& batch, double step, double horizon) {
  if (batch.rank() != 2) throw ShapeError("teacher_inputs: batch must be a matrix, got " + shape_string(batch.shape()));
  if (!(horizon > 0.0)) throw InvalidArgument("teacher_inputs: horizon must be positive");
  const std::size_t rows = batch.rows(), cols = batch.cols();
  Tensor out(Shape{rows, cols + 1});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = batch.at(r, c);
    out.at(r, cols) = step / horizon;
  }
  return out;
}

namespace {
void check_dim(const Teacher& t, std::size_t features) {
  if (t.net.shape.outputs != 1 || t.net.shape.inputs != features + 1)
    throw ShapeError("teacher expects " + std::to_string(t.feature_dim()) + " features, got " +
                     std::to_string(features));
}

double stable_sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}
}  // namespace

std::vector<double> teacher_weights(const Teacher& teacher, const Tensor& batch, double step, double horizon) {
  check_dim(teacher, batch.rank() == 2 ? batch.cols() : 0);
  const Tensor z = nn::logits(teacher.net, teacher_inputs(batch, step, horizon));
  std::vector<double> w(z.rows());
  for (std::size_t r = 0; r < w.size(); ++r) w[r] = stable_sigmoid(z.at(r, 0));
  return w;
}

double teacher_forward(const Teacher& teacher, std::span<const double> features, double step, double horizon) {
  const Tensor row(Shape{1, features.size()}, std::vector<double>(features.begin(), features.end()));
  return teacher_weights(teacher, row, step, horizon)[0];
}

ag::Var teacher_weights(ag::Var inputs, std::span<const ag::Var> phi) {
  return ag::sum_cols(ag::sigmoid(nn::forward(inputs, phi)));
}

TeacherWeights::TeacherWeights(Teacher teacher, bool ablated) : teacher_(std::move(teacher)), ablated_(ablated) {}

std::vector<double> TeacherWeights::weights(const Tensor& batch, std::size_t step, std::size_t) {
  auto w = teacher_weights(teacher_, batch, static_cast<double>(step), teacher_.step_scale);
  return ablated_ ? curricula::batch_mean_ablation(w) : w;
}

// ---------------------------------------------------------------------------
// Practice unroll
// ---------------------------------------------------------------------------
nn::MlpShape PracticeConfig::student_shape() const {
  if (!train) throw InvalidArgument("practice config: no training split");
  return {train->feature_dim, hidden, train->classes};
}

void PracticeConfig::validate() const {
  inner.validate();
  if (!train || !dev || train->empty() || dev->empty())
    throw InvalidArgument("practice config: train and dev splits must be non-empty");
  if (train->feature_dim != dev->feature_dim) throw ShapeError("practice config: train/dev feature mismatch");
  if (hidden == 0 || batch_size == 0) throw InvalidArgument("practice config: hidden and batch size must be positive");
  const std::size_t load = inner_steps * student_shape().parameter_count();
  if (load > guard_limit) {
    std::ostringstream msg;
    msg << "unroll refused: " << inner_steps << " inner steps x " << student_shape().parameter_count()
        << " student parameters = " << load << " exceeds guard limit " << guard_limit << "; keeping the graph needs ~"
        << (estimated_unroll_bytes() >> 20) << " MiB";
    throw ResourceLimitError(msg.str());
  }
}

std::size_t PracticeConfig::estimated_unroll_bytes() const {
  // Per inner step: ~40 parameter-sized tensors for backward + Adam, and
  // ~30 activation-sized tensors for the forward/backward of one batch.
  const auto shape = student_shape();
  const std::size_t per_step = 40 * shape.parameter_count() +
                               30 * batch_size * (shape.hidden + shape.outputs + shape.inputs + 1);
  return inner_steps * per_step * sizeof(double) + dev->size() * shape.hidden * 4 * sizeof(double);
}

Unroll unrolled_practice_training(const Teacher& teacher, const PracticeConfig& cfg, std::uint64_t student_seed,
                                  std::uint64_t data_seed) {
  cfg.validate();
  check_dim(teacher, cfg.train->feature_dim);

  Unroll u;
  u.graph = std::make_unique<ag::Graph>();
  ag::Graph& g = *u.graph;
  u.phi = nn::bind(g, teacher.net, true);
  const auto student = nn::Mlp::init(cfg.student_shape(), student_seed);
  u.theta = nn::bind(g, student, false);

  std::vector<ag::Var> m, v;
  for (const auto& p : student.params) {
    m.push_back(g.constant(Tensor(p.shape())));
    v.push_back(g.constant(Tensor(p.shape())));
  }
  const auto& a = cfg.inner;
  curricula::BatchSampler sampler(data_seed);
  const double horizon = teacher.step_scale;

  for (std::size_t i = 1; i <= cfg.inner_steps; ++i) {
    const auto batch = sampler.draw(cfg.train->size(), cfg.batch_size);
    const Tensor x = cfg.train->features(batch);
    const auto labels = cfg.train->labels(batch);
    auto w = teacher_weights(g.constant(teacher_inputs(x, static_cast<double>(i), horizon)), u.phi);
    auto losses = ag::softmax_cross_entropy(nn::forward(g.constant(x), u.theta), labels);
    auto loss = curricula::weighted_loss(losses, w);
    const auto grads = g.grad_as_graph(loss, u.theta);

    const double bc1 = 1.0 / (1.0 - std::pow(a.beta1, static_cast<double>(i)));
    const double bc2 = 1.0 / (1.0 - std::pow(a.beta2, static_cast<double>(i)));
    for (std::size_t k = 0; k < u.theta.size(); ++k) {
      m[k] = ag::scale(m[k], a.beta1) + ag::scale(grads[k], 1.0 - a.beta1);
      v[k] = ag::scale(v[k], a.beta2) + ag::scale(ag::square(grads[k]), 1.0 - a.beta2);
      auto step = ag::div(ag::scale(m[k], bc1), ag::add_scalar(ag::sqrt(ag::scale(v[k], bc2)), a.eps));
      u.theta[k] = u.theta[k] - ag::scale(step, a.lr);
    }
  }
  return u;
}

namespace {
ag::Var dev_loss_node(Unroll& u, const datasets::Dataset& dev) {
  ag::Graph& g = *u.graph;
  auto losses = ag::softmax_cross_entropy(nn::forward(g.constant(dev.all_features()), u.theta), dev.all_labels());
  return ag::mean(losses);
}
}  // namespace

DevGradient dev_loss_gradient(const Teacher& teacher, const PracticeConfig& cfg, std::uint64_t student_seed,
                              std::uint64_t data_seed) {
  auto u = unrolled_practice_training(teacher, cfg, student_seed, data_seed);
  auto loss = dev_loss_node(u, *cfg.dev);
  DevGradient out;
  out.dev_loss = loss.value().item();
  const auto gm = u.graph->backward(loss);
  for (const auto& p : u.phi) out.grad.push_back(gm[p]);
  return out;
}

double practice_dev_loss(const Teacher& teacher, const PracticeConfig& cfg, std::uint64_t student_seed,
                         std::uint64_t data_seed) {
  auto u = unrolled_practice_training(teacher, cfg, student_seed, data_seed);
  return dev_loss_node(u, *cfg.dev).value().item();
}

void TeacherTrainConfig::validate() const {
  outer.validate();
  if (iterations == 0) throw InvalidArgument("teacher training needs at least one outer iteration");
  if (teacher_hidden == 0) throw InvalidArgument("teacher hidden width must be positive");
}

OuterStep teacher_outer_step(Teacher& teacher, optim::AdamState& state, const optim::AdamConfig& outer,
                             const PracticeConfig& practice, std::uint64_t student_seed, std::uint64_t data_seed) {
  const auto dg = dev_loss_gradient(teacher, practice, student_seed, data_seed);
  OuterStep out{dg.dev_loss, false};
  if (!std::isfinite(dg.dev_loss)) {
    out.skipped = true;
    return out;
  }
  try {
    optim::adam_step(state, outer, dg.grad, teacher.net.params);
  } catch (const PoisonedStateError&) {
    out.skipped = true;
  }
  return out;
}

namespace {
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

PretrainResult pretrain_teacher(const TeacherTrainConfig& config, const PracticeConfig& practice) {
  config.validate();
  practice.validate();
  PretrainResult out;
  out.teacher = Teacher::init(practice.train->feature_dim, config.teacher_hidden, mix(config.seed));
  out.teacher.step_scale = static_cast<double>(std::max<std::size_t>(practice.inner_steps, 1));
  auto state = optim::AdamState::zeros_like(out.teacher.net.params);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const std::uint64_t round = config.reinit == ReinitPolicy::Fixed ? 0 : it + 1;
    const std::uint64_t student_seed = mix(config.seed ^ mix(2 * round + 1));
    const std::uint64_t data_seed = mix(config.seed ^ mix(2 * round + 2));
    const auto step = teacher_outer_step(out.teacher, state, config.outer, practice, student_seed, data_seed);
    if (step.skipped) {
      out.incidents.push_back("outer iteration " + std::to_string(it) + ": non-finite dev loss or gradient, skipped");
      out.dev_losses.push_back(std::nan(""));
    } else {
      out.dev_losses.push_back(step.dev_loss);
    }
  }
  return out;
}

training::TrainOutcome evaluate_teacher(const Teacher& teacher, const datasets::Dataset& train_set,
                                        const datasets::Dataset& dev_set, const training::TrainSpec& spec,
                                        bool ablated) {
  check_dim(teacher, train_set.feature_dim);
  TeacherWeights provider(teacher, ablated);
  return training::train(train_set, dev_set, spec, &provider);
}

// ---------------------------------------------------------------------------
// Serialisation
// ---------------------------------------------------------------------------
namespace {
constexpr const char* kFormat = "currlab-teacher";
constexpr int kVersion = 1;
}  // namespace

std::string teacher_to_json(const Teacher& t) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["feature_dim"] = t.feature_dim();
  j["hidden"] = t.net.shape.hidden;
  j["step_scale"] = t.step_scale;
  std::vector<double> flat;
  for (const auto& p : t.net.params) flat.insert(flat.end(), p.data().begin(), p.data().end());
  j["parameters"] = flat;
  return j.dump();
}

Teacher teacher_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("teacher blob is not valid JSON: ") + e.what(), 1);
  }
  try {
    if (j.at("format").get<std::string>() != kFormat) throw InvalidArgument("teacher blob: unexpected format tag");
    if (j.at("version").get<int>() != kVersion)
      throw InvalidArgument("teacher blob: unsupported version " + j.at("version").dump());
    const auto d = j.at("feature_dim").get<std::size_t>();
    const auto h = j.at("hidden").get<std::size_t>();
    if (d == 0 || h == 0) throw InvalidArgument("teacher blob: dimensions must be positive");
    const auto flat = j.at("parameters").get<std::vector<double>>();
    Teacher t = Teacher::init(d, h, 0);
    t.step_scale = j.at("step_scale").get<double>();
    if (!(t.step_scale > 0.0) || !std::isfinite(t.step_scale))
      throw InvalidArgument("teacher blob: step_scale must be positive");
    if (flat.size() != t.net.shape.parameter_count())
      throw InvalidArgument("teacher blob: expected " + std::to_string(t.net.shape.parameter_count()) +
                            " parameters, found " + std::to_string(flat.size()));
    std::size_t k = 0;
    for (auto& p : t.net.params)
      for (double& x : p.data()) {
        if (!std::isfinite(flat[k])) throw InvalidArgument("teacher blob: non-finite parameter");
        x = flat[k++];
      }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("teacher blob: ") + e.what());
  }
}

void save_teacher(const Teacher& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write teacher file " + path.string());
  out << teacher_to_json(t) << '\n';
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

Teacher load_teacher(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open teacher file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return teacher_from_json(ss.str());
}

}  // namespace currlab::commentaries
