// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit status: 0 success, 2 at least one run aborted,
// 1 usage or configuration error.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "currlab/error.hpp"
#include "currlab/harness.hpp"
#include "currlab/minimal_example.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace currlab;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kAborted = 2;

struct ConfigArgs {
  std::string path;
  std::vector<std::string> sets;  // key.path=json-value
  bool with_baseline = false;
};

void add_config_options(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("-c,--config", a.path, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--set", a.sets, "override a config key, e.g. --set optimizer.lr=3e-3")->take_all();
}

// Later writes win; values that are not valid JSON are taken as strings.
void assign(json& root, const std::string& dotted, json value) {
  json* cur = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (key.empty()) throw InvalidArgument("bad override key '" + dotted + "'");
    if (dot == std::string::npos) {
      (*cur)[key] = std::move(value);
      return;
    }
    if (!cur->contains(key)) (*cur)[key] = json::object();
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

json base_json(const ConfigArgs& a) {
  json j = json::object();
  if (!a.path.empty()) {
    std::ifstream in(a.path);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw InvalidArgument("config " + a.path + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got '" + s + "'");
    assign(j, s.substr(0, eq), parse_value(s.substr(eq + 1)));
  }
  return j;
}

fs::path out_dir(const std::string& name, const std::string& command) {
  fs::path dir = harness::output_root() / name / command;
  fs::create_directories(dir);
  return dir;
}

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::vector<double> finals(const std::vector<harness::RunResult>& rs) {
  std::vector<double> v;
  for (const auto& r : rs) v.push_back(r.final_dev_accuracy);
  return v;
}

// Not-converged runs count as steps + 1 so they rank behind every converged run.
std::vector<double> convergence(const std::vector<harness::RunResult>& rs, std::size_t steps) {
  std::vector<double> v;
  for (const auto& r : rs) v.push_back(static_cast<double>(r.steps_to_convergence.value_or(steps + 1)));
  return v;
}

void print_arm(const std::string& label, const std::vector<harness::RunResult>& rs, std::size_t steps) {
  const auto acc = finals(rs), conv = convergence(rs, steps);
  std::cout << label << ": final dev accuracy " << fmt(harness::mean_of(acc)) << " +- "
            << fmt(rs.size() > 1 ? harness::sample_std(acc) : 0.0) << ", steps to convergence "
            << fmt(harness::mean_of(conv), 1) << '\n';
}

bool any_aborted(const std::vector<harness::RunResult>& rs) {
  bool aborted = false;
  for (const auto& r : rs)
    if (r.aborted) {
      std::cerr << "seed " << r.seed << " aborted: " << r.abort_reason << '\n';
      aborted = true;
    }
  return aborted;
}

void write_runs(const fs::path& dir, const std::string& prefix, const std::vector<harness::RunResult>& rs) {
  std::vector<harness::Series> acc, norm;
  for (const auto& r : rs) {
    const std::string label = prefix + " seed " + std::to_string(r.seed);
    harness::write_trace_csv(r.trace, dir / (prefix + "_trace_seed" + std::to_string(r.seed) + ".csv"));
    acc.push_back(harness::trace_series(r.trace, "dev_accuracy", label));
    norm.push_back(harness::trace_series(r.trace, "update_norm", label));
  }
  harness::write_summary_csv(rs, dir / (prefix + "_summary.csv"));
  harness::emit_plot(acc, dir / (prefix + "_dev_accuracy.svg"), "dev accuracy", "accuracy");
  harness::emit_plot(norm, dir / (prefix + "_update_norm.svg"), "update norm (pre-lr)", "||dtheta||");
}

// Runs the configured curriculum (and optionally the baseline on the same seeds).
int run_curriculum(harness::ExperimentConfig cfg, const std::string& command, bool with_baseline) {
  const auto data = harness::prepare(cfg);
  const fs::path dir = out_dir(cfg.name, command);
  {
    std::ofstream(dir / "config.json") << harness::config_to_json(cfg).dump(2) << '\n';
  }
  const auto runs = harness::run_experiment(cfg, data);
  write_runs(dir, "curriculum", runs);
  print_arm(harness::to_string(cfg.curriculum.kind), runs, cfg.train.steps);
  bool aborted = any_aborted(runs);

  if (with_baseline) {
    auto base_cfg = cfg;
    base_cfg.curriculum.kind = harness::CurriculumKind::None;
    const auto base = harness::run_experiment(base_cfg, data);
    write_runs(dir, "baseline", base);
    print_arm("baseline", base, cfg.train.steps);
    aborted = any_aborted(base) || aborted;
    if (runs.size() >= 2) {
      const auto acc = harness::welch_test(finals(runs), finals(base));
      const auto conv =
          harness::welch_test(convergence(runs, cfg.train.steps), convergence(base, cfg.train.steps));
      std::cout << "welch final accuracy: t=" << fmt(acc.t, 3) << " p=" << fmt(acc.p, 4) << '\n';
      std::cout << "welch steps to convergence: t=" << fmt(conv.t, 3) << " p=" << fmt(conv.p, 4) << '\n';
    }
  }
  std::cout << "outputs in " << dir.string() << '\n';
  return aborted ? kAborted : kOk;
}

int cmd_minimal_example(std::size_t ramp, std::size_t steps, double plateau, optim::AdamConfig adam) {
  using namespace minimal_example;
  adam.lr = 1.0;  // traces are recorded before the learning rate
  const fs::path dir = out_dir("minimal-example", "minimal-example");
  const std::vector<std::pair<std::string, GradientSchedule>> schedules{
      {"constant", GradientSchedule::constant_of(plateau)},
      {"ramp", GradientSchedule::ramp(ramp, plateau)},
      {"sigmoid", GradientSchedule::sigmoid(ramp, plateau)},
  };
  std::vector<harness::Series> series;
  std::vector<std::vector<double>> traces;
  for (const auto& [name, sched] : schedules) {
    auto trace = simulate_single_param(sched, adam, steps);
    std::ofstream out(dir / (name + ".csv"));
    out << "step,abs_delta\n";
    harness::Series s{name, {}, {}};
    for (std::size_t i = 0; i < trace.size(); ++i) {
      out << i + 1 << ',' << trace[i] << '\n';
      s.x.push_back(static_cast<double>(i + 1));
      s.y.push_back(trace[i]);
    }
    series.push_back(std::move(s));
    traces.push_back(std::move(trace));
  }
  harness::emit_plot(series, dir / "minimal_example.svg", "single-parameter Adam", "|dtheta|");
  const StepWindow window{std::min<std::size_t>(100, ramp), std::min(ramp, steps)};
  for (std::size_t k = 1; k < traces.size(); ++k) {
    std::cout << schedules[k].first << " vs constant: boost over [" << window.first << ", " << window.last
              << "] = " << fmt(boost_ratio(traces[k], traces[0], window), 6)
              << ", within 1% of constant from step " << settle_step(traces[k], traces[0], 0.01) << '\n';
  }
  std::cout << "outputs in " << dir.string() << '\n';
  return kOk;
}

int cmd_teach(harness::ExperimentConfig cfg, std::string out_path) {
  const auto data = harness::prepare(cfg);
  const fs::path dir = out_dir(cfg.name, "teach");
  if (out_path.empty()) out_path = (dir / "teacher.json").string();
  const auto result = harness::pretrain_from_config(cfg, data);
  commentaries::save_teacher(result.teacher, out_path);
  {
    std::ofstream losses(dir / "outer_dev_loss.csv");
    losses << "iteration,dev_loss\n";
    for (std::size_t k = 0; k < result.dev_losses.size(); ++k) losses << k + 1 << ',' << result.dev_losses[k] << '\n';
  }
  for (const auto& incident : result.incidents) std::cerr << "incident: " << incident << '\n';
  const std::size_t n = result.dev_losses.size(), tenth = std::max<std::size_t>(n / 10, 1);
  double first = 0, last = 0;
  for (std::size_t k = 0; k < tenth; ++k) first += result.dev_losses[k] / tenth, last += result.dev_losses[n - tenth + k] / tenth;
  std::cout << "outer dev loss: first 10% " << fmt(first) << ", last 10% " << fmt(last) << '\n';
  std::cout << "teacher written to " << out_path << '\n';
  return kOk;
}

int cmd_diagnose(const harness::ExperimentConfig& cfg) {
  const auto data = harness::prepare(cfg);
  const fs::path dir = out_dir(cfg.name, "diagnose-beta");
  const auto d = harness::beta_diagnostic(cfg, data);
  std::ofstream out(dir / "arms.csv");
  out << "arm,mean_probe_accuracy,std_probe_accuracy\n";
  std::vector<harness::Series> norms;
  for (const auto* arm : {&d.curriculum_default, &d.baseline_default, &d.curriculum_equal, &d.baseline_equal}) {
    out << arm->label << ',' << arm->mean << ',' << arm->std << '\n';
    std::cout << arm->label << ": accuracy at step " << d.probe_step << " = " << fmt(arm->mean) << " +- "
              << fmt(arm->std) << '\n';
    harness::Series s{arm->label, {}, arm->mean_update_norm_trace};
    for (std::size_t i = 0; i < s.y.size(); ++i) s.x.push_back(static_cast<double>(i + 1));
    norms.push_back(std::move(s));
  }
  harness::emit_plot(norms, dir / "update_norm.svg", "seed-mean update norm", "||dtheta||");
  std::cout << "default betas: gap " << fmt(d.gap_default) << " (p=" << fmt(d.test_default.p) << "), boost "
            << fmt(d.boost_default) << '\n';
  std::cout << "equal betas:   gap " << fmt(d.gap_equal) << " (p=" << fmt(d.test_equal.p) << "), boost "
            << fmt(d.boost_equal) << '\n';
  std::cout << "outputs in " << dir.string() << '\n';
  return d.any_aborted ? kAborted : kOk;
}

int cmd_grid(const harness::ExperimentConfig& cfg, const std::string& space_path) {
  std::ifstream in(space_path);
  json space_json;
  try {
    space_json = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("grid space " + space_path + " is not valid JSON: " + e.what());
  }
  const auto result = harness::grid_search(cfg, harness::grid_space_from_json(space_json));
  const fs::path dir = out_dir(cfg.name, "grid");
  std::ofstream out(dir / "grid.csv");
  out << "label,seed,selection_accuracy,report_accuracy,steps_to_convergence,aborted\n";
  bool aborted = false;
  for (const auto& r : result.table) {
    out << '"' << r.label << "\"," << r.seed << ',' << r.selection_accuracy << ',' << r.report_accuracy << ',';
    if (r.steps_to_convergence) out << *r.steps_to_convergence;
    out << ',' << (r.aborted ? 1 : 0) << '\n';
    aborted = aborted || r.aborted;
  }
  std::ofstream(dir / "best_config.json") << harness::config_to_json(result.best).dump(2) << '\n';
  std::cout << "best: " << result.best_label << " (selection " << fmt(result.best_selection_mean) << ", report "
            << fmt(result.best_report_mean) << ")\n";
  std::cout << "outputs in " << dir.string() << '\n';
  return aborted ? kAborted : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"currlab: curriculum structure and Adam dynamics experiments"};
  app.require_subcommand(1);

  // minimal-example
  std::size_t ramp = 1000, me_steps = 10000;
  double plateau = 1.0;
  optim::AdamConfig me_adam;
  auto* me = app.add_subcommand("minimal-example", "single-parameter Adam under gradient schedules");
  me->add_option("--ramp-length", ramp, "steps until the gradient reaches its plateau")->check(CLI::PositiveNumber);
  me->add_option("--steps", me_steps, "horizon")->check(CLI::PositiveNumber);
  me->add_option("--plateau", plateau, "plateau gradient magnitude");
  me->add_option("--beta1", me_adam.beta1);
  me->add_option("--beta2", me_adam.beta2);
  me->add_option("--eps", me_adam.eps);

  // toy / handcrafted / evaluate share the config handling
  ConfigArgs toy_args, hc_args, ev_args, teach_args, diag_args, grid_args;
  std::string policy;
  std::optional<double> kappa, lambda;
  auto* toy = app.add_subcommand("toy", "train under a toy loss-weighting policy");
  add_config_options(toy, toy_args);
  toy->add_option("--policy", policy)->check(CLI::IsMember({"linear-up", "linear-down", "constant", "sigmoid"}));
  toy->add_option("--kappa", kappa);
  toy->add_option("--lambda", lambda);
  toy->add_flag("--with-baseline", toy_args.with_baseline, "also run the unweighted baseline on the same seeds");

  std::string measure;
  std::optional<double> start, step;
  std::optional<std::size_t> increment;
  auto* hc = app.add_subcommand("handcrafted", "train under a difficulty-ordered data schedule");
  add_config_options(hc, hc_args);
  hc->add_option("--measure", measure)->check(CLI::IsMember({"sequence-length", "reference-loss"}));
  hc->add_option("--start", start);
  hc->add_option("--step", step);
  hc->add_option("--increment", increment);
  hc->add_flag("--with-baseline", hc_args.with_baseline, "also run the unweighted baseline on the same seeds");

  std::string teacher_out;
  auto* teach = app.add_subcommand("teach", "pretrain a commentaries teacher");
  add_config_options(teach, teach_args);
  teach->add_option("-o,--out", teacher_out, "teacher JSON path (default: <out>/<name>/teach/teacher.json)");

  std::string teacher_path;
  bool ablated = false;
  auto* ev = app.add_subcommand("evaluate", "train a fresh student under a frozen teacher");
  add_config_options(ev, ev_args);
  ev->add_option("--teacher", teacher_path)->check(CLI::ExistingFile);
  ev->add_flag("--ablated", ablated, "replace teacher weights by their batch mean");
  ev->add_flag("--with-baseline", ev_args.with_baseline, "also run the unweighted baseline on the same seeds");

  auto* diag = app.add_subcommand("diagnose-beta", "curriculum vs baseline under default and equal betas");
  add_config_options(diag, diag_args);

  std::string space_path;
  auto* grid = app.add_subcommand("grid", "grid search over config keys");
  add_config_options(grid, grid_args);
  grid->add_option("--space", space_path, "JSON object of key path -> candidate list")
      ->required()
      ->check(CLI::ExistingFile);

  datasets::SyntheticSpec gen;
  std::string gen_kind = "blobs", gen_out;
  auto* gd = app.add_subcommand("gen-data", "write a synthetic dataset as CSV");
  gd->add_option("--kind", gen_kind)->check(CLI::IsMember({"blobs", "varlen"}));
  gd->add_option("--size", gen.size);
  gd->add_option("--classes", gen.classes);
  gd->add_option("--features", gen.features);
  gd->add_option("--noise", gen.noise);
  gd->add_option("--min-length", gen.min_length);
  gd->add_option("--max-length", gen.max_length);
  gd->add_option("--seed", gen.seed);
  gd->add_option("-o,--out", gen_out, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*me) return cmd_minimal_example(ramp, me_steps, plateau, me_adam);

    if (*toy) {
      json j = base_json(toy_args);
      assign(j, "curriculum.kind", "toy");
      if (!policy.empty()) assign(j, "curriculum.toy.policy", policy);
      if (kappa) assign(j, "curriculum.toy.kappa", *kappa);
      if (lambda) assign(j, "curriculum.toy.lambda", *lambda);
      return run_curriculum(harness::config_from_json(j), "toy", toy_args.with_baseline);
    }
    if (*hc) {
      json j = base_json(hc_args);
      assign(j, "curriculum.kind", "handcrafted");
      if (!measure.empty()) assign(j, "curriculum.measure", measure);
      if (start) assign(j, "curriculum.schedule.start", *start);
      if (step) assign(j, "curriculum.schedule.step", *step);
      if (increment) assign(j, "curriculum.schedule.increment", *increment);
      return run_curriculum(harness::config_from_json(j), "handcrafted", hc_args.with_baseline);
    }
    if (*teach) return cmd_teach(harness::config_from_json(base_json(teach_args)), teacher_out);
    if (*ev) {
      json j = base_json(ev_args);
      assign(j, "curriculum.kind", ablated ? "ablated-commentaries" : "commentaries");
      if (!teacher_path.empty()) assign(j, "curriculum.teacher", teacher_path);
      return run_curriculum(harness::config_from_json(j), "evaluate", ev_args.with_baseline);
    }
    if (*diag) return cmd_diagnose(harness::config_from_json(base_json(diag_args)));
    if (*grid) return cmd_grid(harness::config_from_json(base_json(grid_args)), space_path);
    if (*gd) {
      gen.kind = gen_kind == "varlen" ? datasets::TaskKind::VarlenSequences : datasets::TaskKind::Blobs;
      datasets::write_csv(datasets::generate(gen), fs::path(gen_out));
      std::cout << "wrote " << gen.size << " examples to " << gen_out << '\n';
      return kOk;
    }
  } catch (const currlab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
