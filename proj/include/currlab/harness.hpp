// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "currlab/commentaries.hpp"
#include "currlab/curricula.hpp"
#include "currlab/datasets.hpp"
#include "currlab/training.hpp"

namespace currlab::harness {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------
enum class DataKind { Blobs, Varlen, Csv };
enum class CurriculumKind { None, Toy, HandCrafted, Commentaries, AblatedCommentaries };

struct DataConfig {
  DataKind kind = DataKind::Blobs;
  std::string path;  // Csv only
  datasets::SyntheticSpec synthetic;
  std::array<double, 3> split{0.6, 0.2, 0.2};
  std::uint64_t split_seed = 0;
};

struct CurriculumConfig {
  CurriculumKind kind = CurriculumKind::None;
  curricula::ToyPolicy toy = curricula::ToyPolicy::make(curricula::ToyKind::LinearUp);
  curricula::DifficultyMeasure measure = curricula::DifficultyMeasure::SequenceLength;
  curricula::ScheduleFunction schedule;
  std::string teacher_path;
};

/// Recipe for the model whose per-example losses serve as difficulty.
struct ReferenceConfig {
  std::size_t hidden = 16;
  std::size_t steps = 1000;
  double lr = 1e-2;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
};

struct TeacherConfig {
  std::size_t iterations = 100;
  std::size_t inner_steps = 50;
  double inner_lr = 1e-4;
  double outer_lr = 1e-3;
  std::size_t batch_size = 8;
  std::size_t practice_hidden = 8;
  std::size_t teacher_hidden = 8;
  commentaries::ReinitPolicy reinit = commentaries::ReinitPolicy::PerIteration;
  std::size_t guard_limit = 1'000'000;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DataConfig data;
  CurriculumConfig curriculum;
  training::TrainSpec train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  double convergence_fraction = 0.98;
  std::size_t probe_step = 0;  // 0: steps / 4
  double equal_beta = 0.99;
  ReferenceConfig reference;
  TeacherConfig teacher;
  std::size_t jobs = 1;

  std::size_t effective_probe_step() const;
  void validate() const;
};

/// Unknown keys and malformed values throw InvalidArgument naming the key.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every field, including defaults.
nlohmann::json config_to_json(const ExperimentConfig& config);

std::string to_string(CurriculumKind kind);
std::string to_string(curricula::ToyKind kind);

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------
struct PreparedData {
  datasets::Splits splits;
  std::optional<training::DataSchedule> schedule;
  std::optional<commentaries::Teacher> teacher;
};

/// Loads or generates the data, splits it, computes difficulty ordering and
/// loads the teacher as the curriculum requires.
PreparedData prepare(const ExperimentConfig& config);

/// Trains the reference model used for the reference-loss measure.
nn::Mlp train_reference_model(const datasets::Dataset& train_set, const datasets::Dataset& dev_set,
                              const ReferenceConfig& config);

struct RunResult {
  std::uint64_t seed = 0;
  double final_dev_accuracy = 0.0;
  std::optional<std::size_t> steps_to_convergence;
  training::TrainTrace trace;
  nn::Mlp model;
  bool aborted = false;
  std::string abort_reason;
};

RunResult run_single(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed);
/// One result per configured seed, in seed order.
std::vector<RunResult> run_experiment(const ExperimentConfig& config, const PreparedData& data);

/// Pretrains a teacher on the prepared train/dev splits with config.teacher.
commentaries::PretrainResult pretrain_from_config(const ExperimentConfig& config, const PreparedData& data);

/// First step whose dev accuracy reaches fraction * final dev accuracy.
std::optional<std::size_t> steps_to_convergence(const training::TrainTrace& trace, double fraction = 0.98);
std::optional<std::size_t> steps_to_convergence(std::span<const std::size_t> steps,
                                                std::span<const double> accuracies, double fraction = 0.98);

/// Dev accuracy recorded at `step` (latest evaluation at or before it).
double accuracy_at(const training::TrainTrace& trace, std::size_t step);

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------
struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

/// Needs >= 2 values per sample. Two zero-variance samples give p = 1 when
/// their means agree and p = 0 otherwise.
WelchResult welch_test(std::span<const double> a, std::span<const double> b);

double mean_of(std::span<const double> x);
double sample_std(std::span<const double> x);

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------
struct ArmSummary {
  std::string label;
  std::vector<double> probe_accuracy;  // per seed
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> mean_update_norm_trace;  // seed-averaged, index = step - 1
};

struct BetaDiagnostic {
  std::size_t probe_step = 0;
  ArmSummary curriculum_default, baseline_default, curriculum_equal, baseline_equal;
  double boost_default = 0.0;  // ||dtheta|| boost over [1, probe_step]
  double boost_equal = 0.0;
  double gap_default = 0.0;  // curriculum - baseline mean probe accuracy
  double gap_equal = 0.0;
  WelchResult test_default, test_equal;
  bool any_aborted = false;
};

BetaDiagnostic beta_diagnostic(const ExperimentConfig& config, const PreparedData& data);

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------
/// Maps a config key path ("optimizer.lr") to candidate values.
using GridSpace = std::vector<std::pair<std::string, std::vector<nlohmann::json>>>;

GridSpace grid_space_from_json(const nlohmann::json& j);

struct GridRow {
  std::string label;
  std::uint64_t seed = 0;
  double selection_accuracy = 0.0;
  double report_accuracy = 0.0;
  std::optional<std::size_t> steps_to_convergence;
  bool aborted = false;
};

struct GridResult {
  std::vector<GridRow> table;
  std::string best_label;
  ExperimentConfig best;
  double best_selection_mean = 0.0;
  double best_report_mean = 0.0;
};

/// Dev is halved into a selection part (drives evaluation and selection)
/// and a report part (accuracy of the final model only).
GridResult grid_search(const ExperimentConfig& base, const GridSpace& space);

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------
void write_trace_csv(const training::TrainTrace& trace, std::ostream& out);
void write_trace_csv(const training::TrainTrace& trace, const std::filesystem::path& path);
training::TrainTrace read_trace_csv(std::istream& in);
training::TrainTrace read_trace_csv(const std::filesystem::path& path);

/// seed,final_dev_accuracy,steps_to_convergence,aborted (empty steps when not converged).
void write_summary_csv(std::span<const RunResult> results, std::ostream& out);
void write_summary_csv(std::span<const RunResult> results, const std::filesystem::path& path);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// SVG line chart restricted to rect, line and text elements.
void emit_plot(std::span<const Series> series, std::ostream& out, const std::string& title,
               const std::string& y_label);
void emit_plot(std::span<const Series> series, const std::filesystem::path& path, const std::string& title,
               const std::string& y_label);

/// Series of one trace column against step.
Series trace_series(const training::TrainTrace& trace, const std::string& column, const std::string& label);

/// Output root: $CURRLAB_OUT_DIR if set, otherwise ./currlab-out.
std::filesystem::path output_root();

}  // namespace currlab::harness
