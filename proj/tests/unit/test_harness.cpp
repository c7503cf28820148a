#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <regex>
#include <set>
#include <sstream>

#include "currlab/error.hpp"
#include "currlab/harness.hpp"

using namespace currlab;
using namespace currlab::harness;
using nlohmann::json;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.data.synthetic.size = 200;
  c.data.synthetic.classes = 3;
  c.data.synthetic.features = 4;
  c.data.synthetic.noise = 0.3;
  c.train.hidden = 6;
  c.train.steps = 120;
  c.train.eval_interval = 10;
  c.train.lr_schedule.base = 1e-2;
  c.seeds = {0, 1, 2};
  return c;
}

training::TrainTrace trace_of(const std::vector<double>& acc, std::size_t every = 10) {
  training::TrainTrace t;
  for (std::size_t k = 0; k < acc.size(); ++k) {
    training::TraceRow r;
    r.step = k * every;
    r.dev_accuracy = acc[k];
    t.push_back(r);
  }
  return t;
}

}  // namespace

TEST_CASE("config parsing fills every section") {
  auto j = json::parse(R"({
    "name": "toy-up",
    "data": {"kind": "varlen", "size": 300, "classes": 4, "features": 5, "noise": 0.2,
             "min_length": 2, "max_length": 9, "seed": 3, "split": [0.5, 0.25, 0.25], "split_seed": 8},
    "curriculum": {"kind": "toy", "toy": {"policy": "linear-down", "kappa": 1500}},
    "optimizer": {"lr": 0.002, "beta1": 0.8, "beta2": 0.95, "eps": 1e-7, "lr_schedule": "sqrt-warmup", "warmup": 50},
    "training": {"hidden": 12, "init": "zero-output", "batch_size": 16, "steps": 900, "eval_interval": 30,
                 "convergence_fraction": 0.95},
    "diagnostic": {"probe_step": 200, "equal_beta": 0.9},
    "seeds": [4, 5],
    "jobs": 2
  })");
  ExperimentConfig c = config_from_json(j);
  CHECK(c.name == "toy-up");
  CHECK(c.data.kind == DataKind::Varlen);
  CHECK(c.data.synthetic.kind == datasets::TaskKind::VarlenSequences);
  CHECK(c.data.synthetic.max_length == 9);
  CHECK(c.data.split[1] == 0.25);
  CHECK(c.curriculum.kind == CurriculumKind::Toy);
  CHECK(c.curriculum.toy.kind == curricula::ToyKind::LinearDown);
  CHECK(c.curriculum.toy.kappa == 1500);
  CHECK(c.train.lr_schedule.base == 0.002);
  CHECK(c.train.lr_schedule.kind == optim::LrScheduleKind::SqrtWarmup);
  CHECK(c.train.adam.beta2 == 0.95);
  CHECK(c.train.zero_output_init);
  CHECK(c.train.steps == 900);
  CHECK(c.convergence_fraction == 0.95);
  CHECK(c.effective_probe_step() == 200);
  CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(c.jobs == 2);

  // Round trip through the full serialisation.
  ExperimentConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));

  // Sigmoid policies pick up their own default slope.
  auto s = config_from_json(json::parse(R"({"curriculum": {"kind": "toy", "toy": {"policy": "sigmoid"}}})"));
  CHECK(s.curriculum.toy.kappa == 0.005);
  CHECK(config_from_json(json::object()).effective_probe_step() == 250);
}

TEST_CASE("config rejects unknown keys and bad values") {
  auto fails_with = [](const char* text, const char* needle) {
    CHECK_THROWS_WITH_AS(config_from_json(json::parse(text)), doctest::Contains(needle), InvalidArgument);
  };
  fails_with(R"({"nmae": "x"})", "nmae");
  fails_with(R"({"data": {"kind": "blobs", "colour": 1}})", "data.colour");
  fails_with(R"({"optimizer": {"lr": "fast"}})", "optimizer.lr");
  fails_with(R"({"curriculum": {"kind": "magic"}})", "curriculum.kind");
  fails_with(R"({"seeds": []})", "seed");
  fails_with(R"({"data": {"kind": "csv"}})", "data.path");
  fails_with(R"({"curriculum": {"kind": "commentaries"}})", "teacher");
  fails_with(R"({"optimizer": {"lr": -1}})", "learning rate");
  fails_with(R"({"diagnostic": {"probe_step": 5000}})", "probe_step");
  fails_with(R"({"training": {"init": "he"}})", "training.init");
  CHECK_THROWS_AS(load_config("/nonexistent/currlab.json"), InvalidArgument);
}

TEST_CASE("steps to convergence") {
  auto t = trace_of({0.1, 0.5, 0.7, 0.99, 0.95, 1.0});
  CHECK(steps_to_convergence(t) == 30);  // 0.98 * 1.0
  CHECK(steps_to_convergence(t, 0.5) == 10);
  CHECK(steps_to_convergence(trace_of({0.0, 0.0})) == 0);
  std::vector<std::size_t> steps{0, 100, 200};
  std::vector<double> acc{0.2, 0.8, 0.81};
  CHECK(steps_to_convergence(steps, acc) == 100);
  CHECK_THROWS_AS(steps_to_convergence(steps, std::vector<double>{0.1}), InvalidArgument);
  CHECK(accuracy_at(t, 15) == 0.5);
  CHECK(accuracy_at(t, 30) == 0.99);
  CHECK(accuracy_at(t, 1000) == 1.0);
}

TEST_CASE("welch test matches scipy") {
  // Reference values from tests/oracles/welch_oracle.py.
  std::vector<double> a{0.81, 0.79, 0.86, 0.84, 0.80, 0.83}, b{0.75, 0.78, 0.74, 0.80, 0.77};
  auto r = welch_test(a, b);
  CHECK(r.t == doctest::Approx(3.5378207643268422).epsilon(1e-12));
  CHECK(r.df == doctest::Approx(8.90629685157421).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(0.006441227826635086).epsilon(1e-10));
  std::vector<double> c{1, 2, 3, 4}, d{1.5, 2.5, 3.5, 4.5, 5.5, 9.0};
  auto s = welch_test(c, d);
  CHECK(s.t == doctest::Approx(-1.5198827810467066).epsilon(1e-12));
  CHECK(s.p == doctest::Approx(0.16905984654921044).epsilon(1e-10));

  std::vector<double> same{0.5, 0.5, 0.5}, other{0.7, 0.7};
  CHECK(welch_test(same, same).p == 1.0);
  CHECK(welch_test(same, other).p == 0.0);
  CHECK_THROWS_AS(welch_test(std::vector<double>{1.0}, other), InvalidArgument);
  CHECK(mean_of(c) == 2.5);
  CHECK(sample_std(c) == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

TEST_CASE("trace csv round trip") {
  training::TrainTrace t = trace_of({0.1, 0.2, 0.30000000000000004});
  t[1].update_norm = 1.0 / 3.0;
  t[2].lr = 1e-300;
  t[2].sigma_normal = 0.1 + 0.2;
  std::stringstream ss;
  write_trace_csv(t, ss);
  CHECK(ss.str().rfind("step,train_loss,dev_accuracy,update_norm,m_norm,v_norm,mean_weight,sigma_normal,lr,"
                       "data_portion\n",
                       0) == 0);
  CHECK(read_trace_csv(ss) == t);
  std::istringstream bad("step,oops\n1,2\n");
  CHECK_THROWS_AS(read_trace_csv(bad), ParseError);
}

TEST_CASE("plots use only rect, line and text") {
  training::TrainTrace t = trace_of({0.1, 0.4, 0.6, 0.65});
  std::vector<Series> s{trace_series(t, "dev_accuracy", "a<b&c"), trace_series(t, "lr", "flat")};
  std::ostringstream out;
  emit_plot(s, out, "Accuracy", "dev accuracy");
  const std::string svg = out.str();
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("a&lt;b&amp;c") != std::string::npos);
  std::set<std::string> tags;
  const std::regex tag("<([a-zA-Z]+)");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), tag); it != std::sregex_iterator(); ++it)
    tags.insert((*it)[1]);
  tags.erase("svg");
  for (const auto& name : tags) CHECK((name == "rect" || name == "line" || name == "text"));
  CHECK_THROWS_AS(trace_series(t, "nope", "x"), InvalidArgument);
}

TEST_CASE("output root honours the environment") {
  ::unsetenv("CURRLAB_OUT_DIR");
  CHECK(output_root() == std::filesystem::path("currlab-out"));
  ::setenv("CURRLAB_OUT_DIR", "/tmp/currlab-elsewhere", 1);
  CHECK(output_root() == std::filesystem::path("/tmp/currlab-elsewhere"));
  ::unsetenv("CURRLAB_OUT_DIR");
}

TEST_CASE("training trace invariants") {
  auto c = small_config();
  auto data = prepare(c);
  auto r = run_single(c, data, 0);
  REQUIRE_FALSE(r.aborted);
  REQUIRE(r.trace.size() == c.train.steps + 1);
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    CHECK(r.trace[i].step == i);
    CHECK(std::isfinite(r.trace[i].train_loss));
  }
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    CHECK(r.trace[i].mean_weight == 1.0);
    CHECK(r.trace[i].sigma_normal == 0.0);
    CHECK(r.trace[i].update_norm > 0.0);
  }
  CHECK(r.final_dev_accuracy == r.trace.back().dev_accuracy);
  CHECK(r.final_dev_accuracy >= 0.9);
  REQUIRE(r.steps_to_convergence.has_value());
  CHECK(*r.steps_to_convergence <= c.train.steps);

  // Same seed twice: bitwise identical; jobs do not change results.
  CHECK(run_single(c, data, 0).trace == r.trace);
  auto serial = run_experiment(c, data);
  c.jobs = 3;
  auto parallel = run_experiment(c, data);
  REQUIRE(serial.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(serial[k].seed == c.seeds[k]);
    CHECK(serial[k].trace == parallel[k].trace);
  }
}

TEST_CASE("constant weights are equivalent under adam") {
  auto c = small_config();
  auto data = prepare(c);
  training::TrainSpec spec = c.train;
  spec.adam.eps = 1e-12;
  training::ConstantWeights full(1.0), half(0.5);
  auto a = training::train(data.splits.train, data.splits.dev, spec, &full);
  auto b = training::train(data.splits.train, data.splits.dev, spec, &half);
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].dev_accuracy == b.trace[i].dev_accuracy);
    if (i > 0) CHECK(std::abs(a.trace[i].update_norm - b.trace[i].update_norm) <= 1e-6 * a.trace[i].update_norm);
  }
  CHECK_THROWS_AS(training::ConstantWeights(1.5), InvalidArgument);
}

TEST_CASE("non-finite losses abort with a partial trace") {
  auto c = small_config();
  auto data = prepare(c);
  auto train = data.splits.train;
  for (auto& e : train.examples) e.features[0] = std::numeric_limits<double>::infinity();
  auto out = training::train(train, data.splits.dev, c.train);
  CHECK(out.aborted);
  CHECK(out.trace.size() == 1);
  INFO(out.abort_reason);
  CHECK(out.abort_reason.find("step 1") != std::string::npos);
}

TEST_CASE("hand-crafted curricula restrict the data portion") {
  auto c = small_config();
  c.data.kind = DataKind::Varlen;
  c.data.synthetic.kind = datasets::TaskKind::VarlenSequences;
  c.curriculum.kind = CurriculumKind::HandCrafted;
  c.curriculum.schedule = {0.3, 0.1, 10};
  auto data = prepare(c);
  REQUIRE(data.schedule.has_value());
  CHECK(data.schedule->ordered.size() == data.splits.train.size());
  auto r = run_single(c, data, 1);
  CHECK(r.trace[1].data_portion == 0.3);
  CHECK(r.trace[10].data_portion == doctest::Approx(0.4));
  CHECK(r.trace.back().data_portion == 1.0);

  // Reference-loss ordering trains a reference model when no difficulty column exists.
  c.curriculum.measure = curricula::DifficultyMeasure::ReferenceLoss;
  c.reference.steps = 50;
  auto ref = prepare(c);
  REQUIRE(ref.schedule.has_value());
  for (std::size_t k = 1; k < ref.schedule->ordered.size(); ++k)
    CHECK(ref.schedule->ordered.entries[k].score >= ref.schedule->ordered.entries[k - 1].score);
}

TEST_CASE("beta diagnostic compares four arms") {
  auto c = small_config();
  c.curriculum.kind = CurriculumKind::Toy;
  c.curriculum.toy = {curricula::ToyKind::LinearUp, 60.0, 0.0};
  c.probe_step = 40;
  auto data = prepare(c);
  auto d = beta_diagnostic(c, data);
  CHECK(d.probe_step == 40);
  CHECK(d.curriculum_default.probe_accuracy.size() == 3);
  CHECK(d.baseline_equal.mean_update_norm_trace.size() == c.train.steps);
  CHECK(d.gap_default == doctest::Approx(d.curriculum_default.mean - d.baseline_default.mean));
  CHECK(d.boost_default > 1.0);
  CHECK_FALSE(d.any_aborted);
  c.curriculum.kind = CurriculumKind::None;
  CHECK_THROWS_AS(beta_diagnostic(c, data), InvalidArgument);
}

TEST_CASE("grid search selects on one dev half and reports on the other") {
  auto c = small_config();
  c.seeds = {0, 1};
  auto space = grid_space_from_json(json::parse(R"({"optimizer.lr": [1e-5, 1e-2]})"));
  auto g = grid_search(c, space);
  CHECK(g.table.size() == 4);
  CHECK(g.best_label == "optimizer.lr=0.01");
  CHECK(g.best.train.lr_schedule.base == 0.01);
  CHECK(g.best_report_mean > 0.5);
  CHECK_THROWS_AS(grid_search(c, grid_space_from_json(json::parse(R"({"optimizer.speed": [1]})"))),
                  InvalidArgument);
  CHECK_THROWS_AS(grid_space_from_json(json::parse(R"({"optimizer.lr": []})")), InvalidArgument);
  CHECK_THROWS_AS(grid_search(c, GridSpace{}), InvalidArgument);
}

TEST_CASE("spec arithmetic example for convergence") {
  std::vector<std::size_t> steps{0, 100, 200, 300, 400};
  std::vector<double> acc{0.5, 0.9, 0.97, 0.99, 0.99};
  CHECK(steps_to_convergence(steps, acc) == 300);
}

TEST_CASE("zero steps give an initialisation-only trace") {
  auto c = small_config();
  c.train.steps = 0;
  auto data = prepare(c);
  auto r = run_single(c, data, 0);
  REQUIRE(r.trace.size() == 1);
  CHECK(r.trace[0].step == 0);
  CHECK(r.steps_to_convergence == 0);
  std::ostringstream empty;
  write_trace_csv(training::TrainTrace{}, empty);
  const std::string text = empty.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
}

TEST_CASE("recorded update norm equals the applied pre-lr update") {
  auto c = small_config();
  c.train.steps = 1;
  auto data = prepare(c);
  training::TrainSpec spec = c.train;
  spec.init_seed = 21;
  auto out = training::train(data.splits.train, data.splits.dev, spec);
  auto init = nn::Mlp::init(out.model.shape, 21);
  std::vector<Tensor> delta;
  for (std::size_t k = 0; k < init.params.size(); ++k) {
    Tensor d(init.params[k].shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (init.params[k][i] - out.model.params[k][i]) / spec.lr_schedule.base;
    delta.push_back(d);
  }
  CHECK(out.trace[1].update_norm == doctest::Approx(optim::global_update_norm(delta)).epsilon(1e-9));
}

TEST_CASE("constant toy weighting reproduces the baseline trajectory") {
  auto c = small_config();
  auto data = prepare(c);
  auto base = run_single(c, data, 2);
  c.curriculum.kind = CurriculumKind::Toy;
  c.curriculum.toy = curricula::ToyPolicy::make(curricula::ToyKind::Constant);
  auto flat = run_single(c, data, 2);
  for (std::size_t i = 0; i < base.trace.size(); ++i) CHECK(base.trace[i].dev_accuracy == flat.trace[i].dev_accuracy);
  CHECK(flat.trace[5].mean_weight == 0.5);
}

TEST_CASE("single-point grid returns that config") {
  auto c = small_config();
  c.seeds = {0, 1};
  auto g = grid_search(c, grid_space_from_json(json::parse(R"({"training.hidden": [5]})")));
  CHECK(g.table.size() == 2);
  CHECK(g.best.train.hidden == 5);
  CHECK(g.best_label == "training.hidden=5");
}
