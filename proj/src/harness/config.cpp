// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <set>

#include "currlab/error.hpp"
#include "currlab/harness.hpp"

namespace currlab::harness {

using nlohmann::json;

namespace {

// Reads fields from one JSON object and rejects anything left unread.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidArgument("config: '" + where() + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw InvalidArgument("config: bad value for '" + where(key) + "': " + j_.at(key).dump());
    }
  }

  std::optional<Section> sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), where(key));
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw InvalidArgument("config: unknown key '" + where(k) + "'");
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class E>
E pick(const std::string& value, std::initializer_list<std::pair<const char*, E>> table, const std::string& key) {
  std::string options;
  for (const auto& [name, e] : table) {
    if (value == name) return e;
    options += options.empty() ? name : std::string(", ") + name;
  }
  throw InvalidArgument("config: '" + key + "' must be one of {" + options + "}, got '" + value + "'");
}

const std::initializer_list<std::pair<const char*, DataKind>> kDataKinds{
    {"blobs", DataKind::Blobs}, {"varlen", DataKind::Varlen}, {"csv", DataKind::Csv}};
const std::initializer_list<std::pair<const char*, CurriculumKind>> kCurricula{
    {"none", CurriculumKind::None},
    {"toy", CurriculumKind::Toy},
    {"handcrafted", CurriculumKind::HandCrafted},
    {"commentaries", CurriculumKind::Commentaries},
    {"ablated-commentaries", CurriculumKind::AblatedCommentaries}};
const std::initializer_list<std::pair<const char*, curricula::ToyKind>> kToyKinds{
    {"linear-up", curricula::ToyKind::LinearUp},
    {"linear-down", curricula::ToyKind::LinearDown},
    {"constant", curricula::ToyKind::Constant},
    {"sigmoid", curricula::ToyKind::Sigmoid}};
const std::initializer_list<std::pair<const char*, curricula::DifficultyMeasure>> kMeasures{
    {"sequence-length", curricula::DifficultyMeasure::SequenceLength},
    {"reference-loss", curricula::DifficultyMeasure::ReferenceLoss}};
const std::initializer_list<std::pair<const char*, optim::LrScheduleKind>> kLrKinds{
    {"constant", optim::LrScheduleKind::Constant}, {"sqrt-warmup", optim::LrScheduleKind::SqrtWarmup}};
const std::initializer_list<std::pair<const char*, commentaries::ReinitPolicy>> kReinit{
    {"fixed", commentaries::ReinitPolicy::Fixed}, {"per-iteration", commentaries::ReinitPolicy::PerIteration}};

template <class E>
std::string name_of(E e, std::initializer_list<std::pair<const char*, E>> table) {
  for (const auto& [name, v] : table)
    if (v == e) return name;
  return "?";
}

}  // namespace

std::string to_string(CurriculumKind kind) { return name_of(kind, kCurricula); }
std::string to_string(curricula::ToyKind kind) { return name_of(kind, kToyKinds); }

std::size_t ExperimentConfig::effective_probe_step() const {
  return probe_step == 0 ? std::max<std::size_t>(train.steps / 4, 1) : probe_step;
}

void ExperimentConfig::validate() const {
  train.validate();
  if (seeds.empty()) throw InvalidArgument("config: at least one seed is required");
  if (!(convergence_fraction > 0.0 && convergence_fraction <= 1.0))
    throw InvalidArgument("config: convergence_fraction must be in (0, 1]");
  if (!(equal_beta >= 0.0 && equal_beta < 1.0)) throw InvalidArgument("config: equal_beta must be in [0, 1)");
  if (jobs == 0) throw InvalidArgument("config: jobs must be positive");
  if (data.kind == DataKind::Csv && data.path.empty()) throw InvalidArgument("config: data.path required for csv");
  if (data.kind != DataKind::Csv) data.synthetic.validate();
  if (curriculum.kind == CurriculumKind::Toy) curriculum.toy.validate();
  if (curriculum.kind == CurriculumKind::HandCrafted) curriculum.schedule.validate();
  if ((curriculum.kind == CurriculumKind::Commentaries || curriculum.kind == CurriculumKind::AblatedCommentaries) &&
      curriculum.teacher_path.empty())
    throw InvalidArgument("config: curriculum.teacher is required for commentaries");
  if (probe_step > train.steps) throw InvalidArgument("config: probe_step exceeds training steps");
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "");
  root.read("name", c.name);
  root.read("seeds", c.seeds);
  root.read("jobs", c.jobs);

  if (auto s = root.sub("data")) {
    std::string kind = "blobs";
    s->read("kind", kind);
    c.data.kind = pick(kind, kDataKinds, s->where("kind"));
    c.data.synthetic.kind = c.data.kind == DataKind::Varlen ? datasets::TaskKind::VarlenSequences
                                                           : datasets::TaskKind::Blobs;
    s->read("path", c.data.path);
    s->read("size", c.data.synthetic.size);
    s->read("classes", c.data.synthetic.classes);
    s->read("features", c.data.synthetic.features);
    s->read("noise", c.data.synthetic.noise);
    s->read("min_length", c.data.synthetic.min_length);
    s->read("max_length", c.data.synthetic.max_length);
    s->read("seed", c.data.synthetic.seed);
    s->read("split", c.data.split);
    s->read("split_seed", c.data.split_seed);
    s->finish();
  }

  if (auto s = root.sub("curriculum")) {
    std::string kind = "none";
    s->read("kind", kind);
    c.curriculum.kind = pick(kind, kCurricula, s->where("kind"));
    if (auto t = s->sub("toy")) {
      std::string policy = "linear-up";
      t->read("policy", policy);
      c.curriculum.toy = curricula::ToyPolicy::make(pick(policy, kToyKinds, t->where("policy")));
      t->read("kappa", c.curriculum.toy.kappa);
      t->read("lambda", c.curriculum.toy.lambda);
      t->finish();
    }
    std::string measure = "sequence-length";
    s->read("measure", measure);
    c.curriculum.measure = pick(measure, kMeasures, s->where("measure"));
    if (auto t = s->sub("schedule")) {
      t->read("start", c.curriculum.schedule.start_portion);
      t->read("step", c.curriculum.schedule.step_size);
      t->read("increment", c.curriculum.schedule.increment);
      t->finish();
    }
    s->read("teacher", c.curriculum.teacher_path);
    s->finish();
  }

  if (auto s = root.sub("optimizer")) {
    s->read("lr", c.train.lr_schedule.base);
    s->read("beta1", c.train.adam.beta1);
    s->read("beta2", c.train.adam.beta2);
    s->read("eps", c.train.adam.eps);
    std::string kind = "constant";
    s->read("lr_schedule", kind);
    c.train.lr_schedule.kind = pick(kind, kLrKinds, s->where("lr_schedule"));
    s->read("warmup", c.train.lr_schedule.warmup);
    s->finish();
  }
  c.train.adam.lr = c.train.lr_schedule.base;

  if (auto s = root.sub("training")) {
    s->read("hidden", c.train.hidden);
    std::string init = "xavier";
    s->read("init", init);
    c.train.zero_output_init = pick<bool>(init, {{"xavier", false}, {"zero-output", true}}, s->where("init"));
    s->read("batch_size", c.train.batch_size);
    s->read("steps", c.train.steps);
    s->read("eval_interval", c.train.eval_interval);
    s->read("convergence_fraction", c.convergence_fraction);
    s->finish();
  }

  if (auto s = root.sub("diagnostic")) {
    s->read("probe_step", c.probe_step);
    s->read("equal_beta", c.equal_beta);
    s->finish();
  }

  if (auto s = root.sub("reference")) {
    s->read("hidden", c.reference.hidden);
    s->read("steps", c.reference.steps);
    s->read("lr", c.reference.lr);
    s->read("batch_size", c.reference.batch_size);
    s->read("seed", c.reference.seed);
    s->finish();
  }

  if (auto s = root.sub("teacher")) {
    auto& t = c.teacher;
    s->read("iterations", t.iterations);
    s->read("inner_steps", t.inner_steps);
    s->read("inner_lr", t.inner_lr);
    s->read("outer_lr", t.outer_lr);
    s->read("batch_size", t.batch_size);
    s->read("practice_hidden", t.practice_hidden);
    s->read("teacher_hidden", t.teacher_hidden);
    std::string reinit = "per-iteration";
    s->read("reinit", reinit);
    t.reinit = pick(reinit, kReinit, s->where("reinit"));
    s->read("guard_limit", t.guard_limit);
    s->read("seed", t.seed);
    s->finish();
  }

  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const ExperimentConfig& c) {
  const auto& s = c.data.synthetic;
  json j;
  j["name"] = c.name;
  j["seeds"] = c.seeds;
  j["jobs"] = c.jobs;
  j["data"] = {{"kind", name_of(c.data.kind, kDataKinds)},
               {"path", c.data.path},
               {"size", s.size},
               {"classes", s.classes},
               {"features", s.features},
               {"noise", s.noise},
               {"min_length", s.min_length},
               {"max_length", s.max_length},
               {"seed", s.seed},
               {"split", c.data.split},
               {"split_seed", c.data.split_seed}};
  j["curriculum"] = {
      {"kind", to_string(c.curriculum.kind)},
      {"toy",
       {{"policy", to_string(c.curriculum.toy.kind)},
        {"kappa", c.curriculum.toy.kappa},
        {"lambda", c.curriculum.toy.lambda}}},
      {"measure", name_of(c.curriculum.measure, kMeasures)},
      {"schedule",
       {{"start", c.curriculum.schedule.start_portion},
        {"step", c.curriculum.schedule.step_size},
        {"increment", c.curriculum.schedule.increment}}},
      {"teacher", c.curriculum.teacher_path}};
  j["optimizer"] = {{"lr", c.train.lr_schedule.base},
                    {"beta1", c.train.adam.beta1},
                    {"beta2", c.train.adam.beta2},
                    {"eps", c.train.adam.eps},
                    {"lr_schedule", name_of(c.train.lr_schedule.kind, kLrKinds)},
                    {"warmup", c.train.lr_schedule.warmup}};
  j["training"] = {{"hidden", c.train.hidden},
                   {"init", c.train.zero_output_init ? "zero-output" : "xavier"},
                   {"batch_size", c.train.batch_size},
                   {"steps", c.train.steps},
                   {"eval_interval", c.train.eval_interval},
                   {"convergence_fraction", c.convergence_fraction}};
  j["diagnostic"] = {{"probe_step", c.probe_step}, {"equal_beta", c.equal_beta}};
  j["reference"] = {{"hidden", c.reference.hidden},
                    {"steps", c.reference.steps},
                    {"lr", c.reference.lr},
                    {"batch_size", c.reference.batch_size},
                    {"seed", c.reference.seed}};
  const auto& t = c.teacher;
  j["teacher"] = {{"iterations", t.iterations},         {"inner_steps", t.inner_steps},
                  {"inner_lr", t.inner_lr},             {"outer_lr", t.outer_lr},
                  {"batch_size", t.batch_size},         {"practice_hidden", t.practice_hidden},
                  {"teacher_hidden", t.teacher_hidden}, {"reinit", name_of(t.reinit, kReinit)},
                  {"guard_limit", t.guard_limit},       {"seed", t.seed}};
  return j;
}

}  // namespace currlab::harness
