#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "currlab/datasets.hpp"
#include "currlab/error.hpp"
#include "currlab/harness.hpp"
#include "currlab/training.hpp"

using namespace currlab;
using namespace currlab::datasets;

namespace {

SyntheticSpec blobs(std::size_t n, std::size_t classes, double noise, std::uint64_t seed = 0) {
  SyntheticSpec s;
  s.size = n;
  s.classes = classes;
  s.features = 6;
  s.noise = noise;
  s.seed = seed;
  return s;
}

std::set<std::vector<double>> feature_set(const Dataset& d) {
  std::set<std::vector<double>> out;
  for (const auto& e : d.examples) out.insert(e.features);
  return out;
}

}  // namespace

TEST_CASE("generators are deterministic under their seed") {
  CHECK(generate(blobs(200, 3, 0.4, 5)) == generate(blobs(200, 3, 0.4, 5)));
  CHECK_FALSE(generate(blobs(200, 3, 0.4, 5)) == generate(blobs(200, 3, 0.4, 6)));
  SyntheticSpec v = blobs(200, 3, 0.4, 5);
  v.kind = TaskKind::VarlenSequences;
  CHECK(generate(v) == generate(v));
  std::ostringstream a, b;
  write_csv(generate(v), a);
  write_csv(generate(v), b);
  CHECK(a.str() == b.str());
}

TEST_CASE("labels and lengths respect the spec") {
  SyntheticSpec v = blobs(300, 4, 0.5, 1);
  v.kind = TaskKind::VarlenSequences;
  v.min_length = 3;
  v.max_length = 9;
  Dataset d = generate(v);
  CHECK(d.size() == 300);
  CHECK(d.classes == 4);
  CHECK(d.feature_dim == 6);
  std::set<std::size_t> labels, lengths;
  for (const auto& e : d.examples) {
    CHECK(e.label < 4);
    REQUIRE(e.sequence_length.has_value());
    CHECK(*e.sequence_length >= 3);
    CHECK(*e.sequence_length <= 9);
    labels.insert(e.label);
    lengths.insert(*e.sequence_length);
  }
  CHECK(labels.size() == 4);
  CHECK(lengths.size() == 7);
}

TEST_CASE("degenerate specs are rejected") {
  CHECK_THROWS_AS(generate(blobs(3, 2, 0.1)), InvalidArgument);
  CHECK_THROWS_AS(generate(blobs(100, 1, 0.1)), InvalidArgument);
  CHECK_THROWS_AS(generate(blobs(100, 2, -0.1)), InvalidArgument);
  SyntheticSpec s = blobs(100, 2, 0.1);
  s.features = 0;
  CHECK_THROWS_AS(generate(s), InvalidArgument);
  s = blobs(100, 2, 0.1);
  s.kind = TaskKind::VarlenSequences;
  s.min_length = 10;
  s.max_length = 5;
  CHECK_THROWS_AS(generate(s), InvalidArgument);
}

TEST_CASE("noiseless blobs are linearly separable") {
  Dataset d = generate(blobs(120, 5, 0.0));
  // Linear classifier: argmax of dot products with the class means.
  std::vector<std::vector<double>> centre(5, std::vector<double>(6, 0.0));
  for (const auto& e : d.examples) centre[e.label] = e.features;
  for (const auto& e : d.examples) {
    std::size_t best = 0;
    double best_dot = -1e300;
    for (std::size_t k = 0; k < 5; ++k) {
      double dot = 0;
      for (std::size_t j = 0; j < 6; ++j) dot += centre[k][j] * e.features[j];
      if (dot > best_dot) best_dot = dot, best = k;
    }
    CHECK(best == e.label);
  }
}

TEST_CASE("two noisy blobs are learnable by a small perceptron") {
  SyntheticSpec s = blobs(1000, 2, 0.5, 2);
  s.features = 4;
  Splits sp = split(generate(s), {0.6, 0.2, 0.2}, 0);
  harness::ReferenceConfig rc;
  nn::Mlp m = harness::train_reference_model(sp.train, sp.dev, rc);
  CHECK(training::accuracy(m, sp.dev) >= 0.9);
}

TEST_CASE("varlen features shrink with sequence length") {
  SyntheticSpec v = blobs(2000, 2, 0.5, 3);
  v.kind = TaskKind::VarlenSequences;
  v.min_length = 4;
  v.max_length = 64;
  Dataset d = generate(v);
  double short_norm = 0, long_norm = 0;
  std::size_t ns = 0, nl = 0;
  for (const auto& e : d.examples) {
    double n2 = 0;
    for (double x : e.features) n2 += x * x;
    if (*e.sequence_length <= 8) short_norm += std::sqrt(n2), ++ns;
    if (*e.sequence_length >= 56) long_norm += std::sqrt(n2), ++nl;
  }
  REQUIRE(ns > 0);
  REQUIRE(nl > 0);
  // Norm scales as 1/sqrt(L): at least a factor 2 between the two groups.
  CHECK(short_norm / ns > 2.0 * long_norm / nl);
}

TEST_CASE("reference losses") {
  Dataset d = generate(blobs(50, 3, 0.3, 4));
  nn::Mlp uniform = nn::Mlp::init_zero_output({6, 5, 3}, 1);
  for (const auto& e : compute_reference_losses(d, uniform).examples)
    CHECK(*e.reference_loss == doctest::Approx(std::log(3.0)).epsilon(1e-14));

  // Confident and correct: scaled-up logits on an ideal linear readout.
  nn::Mlp sharp = nn::Mlp::init({6, 5, 3}, 2);
  const Dataset scored = compute_reference_losses(d, sharp);
  for (std::size_t k = 0; k < d.size(); ++k) {
    // Independent recomputation through the numeric forward pass and an explicit logsumexp.
    std::vector<std::size_t> idx{k};
    const Tensor z = nn::logits(sharp, d.features(idx));
    double mx = z[0];
    for (std::size_t c = 1; c < 3; ++c) mx = std::max(mx, z[c]);
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) s += std::exp(z[c] - mx);
    const double expected = mx + std::log(s) - z[d.examples[k].label];
    CHECK(std::abs(*scored.examples[k].reference_loss - expected) < 1e-12);
    CHECK(scored.examples[k].features == d.examples[k].features);
    CHECK(scored.examples[k].label == d.examples[k].label);
  }

  nn::Mlp confident = nn::Mlp::init_zero_output({6, 5, 3}, 3);
  // Bias-only model that always predicts class 0 with logit margin 50.
  confident.params[3][0] = 50.0;
  Dataset zeros = d;
  for (auto& e : zeros.examples) e.label = 0;
  for (const auto& e : compute_reference_losses(zeros, confident).examples) CHECK(*e.reference_loss < 1e-20);

  CHECK_THROWS_AS(compute_reference_losses(d, nn::Mlp::init({5, 5, 3}, 1)), ShapeError);
  CHECK_THROWS_AS(compute_reference_losses(d, nn::Mlp::init({6, 5, 2}, 1)), ShapeError);
}

TEST_CASE("csv round trip") {
  SyntheticSpec v = blobs(40, 3, 0.5, 7);
  v.kind = TaskKind::VarlenSequences;
  Dataset d = generate(v);
  d = compute_reference_losses(d, nn::Mlp::init({6, 4, 3}, 1));
  d.examples[3].reference_loss.reset();
  std::stringstream ss;
  write_csv(d, ss);
  CHECK(parse_csv(ss) == d);

  const auto path = std::filesystem::temp_directory_path() / "currlab_test_roundtrip.csv";
  write_csv(d, path);
  CHECK(load_csv(path) == d);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_csv(path), InvalidArgument);
}

TEST_CASE("csv header mapping and errors") {
  std::istringstream ok("f1,label,f0,difficulty\n0.5,1,-2,0.25\n1e-3,0,3,\n");
  Dataset d = parse_csv(ok);
  REQUIRE(d.size() == 2);
  CHECK(d.feature_dim == 2);
  CHECK(d.classes == 2);
  CHECK(d.examples[0].features == std::vector<double>{-2, 0.5});
  CHECK(*d.examples[0].reference_loss == 0.25);
  CHECK_FALSE(d.examples[1].reference_loss.has_value());

  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      parse_csv(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("label,f0\n1,0.5\n0,abc\n") == 3);
  CHECK(line_of("label,f0\n1,0.5,7\n") == 2);
  CHECK(line_of("label,f0,f2\n1,0.5,1\n") == 1);
  CHECK(line_of("label,f0,colour\n1,0.5,1\n") == 1);
  CHECK(line_of("f0\n0.5\n") == 1);
  CHECK(line_of("") == 1);
  CHECK(line_of("label,f0,sequence_length\n1,0.5,0\n") == 2);
  CHECK(line_of("label,f0\n-1,0.5\n") == 2);
  CHECK(line_of("label,f0\n1,nan\n") == 2);
}

TEST_CASE("split sizes and disjointness") {
  CHECK(split_sizes(103, {0.7, 0.2, 0.1}) == std::array<std::size_t, 3>{72, 21, 10});
  CHECK(split_sizes(10, {1.0, 0.0, 0.0}) == std::array<std::size_t, 3>{10, 0, 0});
  CHECK(split_sizes(3, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == std::array<std::size_t, 3>{1, 1, 1});
  CHECK_THROWS_AS(split_sizes(10, {0.5, 0.6, -0.1}), InvalidArgument);
  CHECK_THROWS_AS(split_sizes(10, {0.5, 0.2, 0.2}), InvalidArgument);

  Dataset d = generate(blobs(103, 2, 0.5, 8));
  Splits s = split(d, {0.7, 0.2, 0.1}, 3);
  CHECK(s.train.size() == 72);
  CHECK(s.dev.size() == 21);
  CHECK(s.test.size() == 10);
  auto all = feature_set(d);
  auto a = feature_set(s.train), b = feature_set(s.dev), c = feature_set(s.test);
  CHECK(a.size() + b.size() + c.size() == all.size());
  for (const auto& x : b) CHECK(a.count(x) == 0);
  for (const auto& x : c) CHECK(a.count(x) == 0);
  for (const auto& x : c) CHECK(b.count(x) == 0);
  CHECK(s.train.classes == d.classes);
  CHECK(s.test.feature_dim == d.feature_dim);

  Splits again = split(d, {0.7, 0.2, 0.1}, 3);
  CHECK(again.train == s.train);
  Splits all_train = split(d, {1.0, 0.0, 0.0}, 3);
  CHECK(all_train.train.size() == d.size());
  CHECK(all_train.dev.empty());

  auto [h1, h2] = halve(s.dev, 1);
  CHECK(h1.size() == 11);
  CHECK(h2.size() == 10);
}

TEST_CASE("feature selection") {
  Dataset d = generate(blobs(20, 2, 0.5, 9));
  std::vector<std::size_t> idx{3, 0};
  Tensor x = d.features(idx);
  CHECK(x.rows() == 2);
  CHECK(x.at(0, 1) == d.examples[3].features[1]);
  CHECK(d.labels(idx) == std::vector<std::size_t>{d.examples[3].label, d.examples[0].label});
  CHECK_THROWS_AS(d.features(std::vector<std::size_t>{}), InvalidArgument);
}
