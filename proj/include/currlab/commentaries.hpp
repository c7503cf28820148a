// SPDX-License-Identifier: Apache-2.0
//
// Meta-learned loss-weighting teacher. Pretraining differentiates the dev
// loss of a short practice run through every inner Adam step; evaluation
// trains a fresh student with the frozen teacher's weights.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "currlab/autograd.hpp"
#include "currlab/datasets.hpp"
#include "currlab/mlp.hpp"
#include "currlab/optim.hpp"
#include "currlab/training.hpp"

namespace currlab::commentaries {

/// Perceptron over (example features, step / step_scale) -> sigmoid weight.
/// step_scale is the practice horizon the teacher was trained with; later
/// runs feed the same scale, so steps beyond it extrapolate past 1.
struct Teacher {
  nn::Mlp net;  // shape {feature_dim + 1, hidden, 1}
  double step_scale = 1.0;

  std::size_t feature_dim() const { return net.shape.inputs - 1; }

  /// Zero output layer, so every weight starts at exactly 0.5.
  static Teacher init(std::size_t feature_dim, std::size_t hidden, std::uint64_t seed);
  /// Fully random parameters (non-zero output layer).
  static Teacher random(std::size_t feature_dim, std::size_t hidden, std::uint64_t seed);
};

/// Batch features with the normalised step appended as a final column.
Tensor teacher_inputs(const Tensor& batch, double step, double horizon);

double teacher_forward(const Teacher& teacher, std::span<const double> features, double step, double horizon);
std::vector<double> teacher_weights(const Teacher& teacher, const Tensor& batch, double step, double horizon);
/// Differentiable weights [rows] for `inputs` from teacher_inputs().
autograd::Var teacher_weights(autograd::Var inputs, std::span<const autograd::Var> phi);

class TeacherWeights final : public training::WeightProvider {
 public:
  TeacherWeights(Teacher teacher, bool ablated);
  std::vector<double> weights(const Tensor& batch, std::size_t step, std::size_t total_steps) override;

 private:
  Teacher teacher_;
  bool ablated_;
};

struct PracticeConfig {
  std::size_t inner_steps = 50;
  optim::AdamConfig inner{.lr = 1e-4};
  std::size_t hidden = 8;
  std::size_t batch_size = 8;
  /// Refuse unrolls with inner_steps * student parameters above this.
  std::size_t guard_limit = 1'000'000;
  const datasets::Dataset* train = nullptr;
  const datasets::Dataset* dev = nullptr;

  nn::MlpShape student_shape() const;
  void validate() const;
  /// Rough bytes needed to keep the whole unroll alive.
  std::size_t estimated_unroll_bytes() const;
};

struct Unroll {
  std::unique_ptr<autograd::Graph> graph;
  std::vector<autograd::Var> phi;
  std::vector<autograd::Var> theta;  // final student parameters, functions of phi
};

/// Runs inner_steps weighted-loss Adam steps (teacher fed step / step_scale) with every update expressed as
/// graph operations. `student_seed` fixes the initialisation and
/// `data_seed` the batch sequence.
Unroll unrolled_practice_training(const Teacher& teacher, const PracticeConfig& config, std::uint64_t student_seed,
                                  std::uint64_t data_seed);

struct DevGradient {
  double dev_loss = 0.0;
  std::vector<Tensor> grad;  // d dev_loss / d phi, ordered like Teacher::net.params
};

/// Mean dev cross-entropy after the unroll and its gradient w.r.t. phi.
DevGradient dev_loss_gradient(const Teacher& teacher, const PracticeConfig& config, std::uint64_t student_seed,
                              std::uint64_t data_seed);

/// Dev loss of the unroll without building the outer gradient.
double practice_dev_loss(const Teacher& teacher, const PracticeConfig& config, std::uint64_t student_seed,
                         std::uint64_t data_seed);

enum class ReinitPolicy {
  Fixed,         // same practice initialisation and batches every outer step
  PerIteration,  // fresh seeds derived from the iteration index
};

struct TeacherTrainConfig {
  std::size_t iterations = 100;
  optim::AdamConfig outer{.lr = 1e-3};
  ReinitPolicy reinit = ReinitPolicy::PerIteration;
  std::size_t teacher_hidden = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct OuterStep {
  double dev_loss = 0.0;
  bool skipped = false;
};

/// One outer Adam step on the teacher parameters. A non-finite dev loss or
/// gradient leaves the teacher untouched and reports skipped.
OuterStep teacher_outer_step(Teacher& teacher, optim::AdamState& outer_state, const optim::AdamConfig& outer,
                             const PracticeConfig& practice, std::uint64_t student_seed, std::uint64_t data_seed);

struct PretrainResult {
  Teacher teacher;
  std::vector<double> dev_losses;  // one per outer iteration (NaN where skipped)
  std::vector<std::string> incidents;
};

PretrainResult pretrain_teacher(const TeacherTrainConfig& config, const PracticeConfig& practice);

/// Trains a fresh student under the frozen teacher.
training::TrainOutcome evaluate_teacher(const Teacher& teacher, const datasets::Dataset& train_set,
                                        const datasets::Dataset& dev_set, const training::TrainSpec& spec,
                                        bool ablated = false);

void save_teacher(const Teacher& teacher, const std::filesystem::path& path);
/// Throws ParseError/InvalidArgument on a malformed blob or wrong dimensions.
Teacher load_teacher(const std::filesystem::path& path);
std::string teacher_to_json(const Teacher& teacher);
Teacher teacher_from_json(const std::string& text);

}  // namespace currlab::commentaries
