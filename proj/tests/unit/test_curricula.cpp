#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include "currlab/curricula.hpp"
#include "currlab/datasets.hpp"
#include "currlab/error.hpp"

using namespace currlab;
using namespace currlab::curricula;
namespace ag = currlab::autograd;

namespace {

datasets::Dataset with_lengths(const std::vector<std::size_t>& lengths) {
  datasets::Dataset d;
  d.classes = 2;
  d.feature_dim = 1;
  for (std::size_t k = 0; k < lengths.size(); ++k)
    d.examples.push_back({{static_cast<double>(k)}, k % 2, lengths[k], std::nullopt});
  return d;
}

// Insertion sort keyed on (score, index); deliberately unrelated to std::stable_sort.
std::vector<std::size_t> reference_order(const std::vector<double>& s) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < s.size(); ++k) {
    std::size_t pos = idx.size();
    while (pos > 0 && s[idx[pos - 1]] > s[k]) --pos;
    idx.insert(idx.begin() + static_cast<std::ptrdiff_t>(pos), k);
  }
  return idx;
}

}  // namespace

TEST_CASE("toy policies") {
  auto up = ToyPolicy::make(ToyKind::LinearUp);
  auto down = ToyPolicy::make(ToyKind::LinearDown);
  auto flat = ToyPolicy::make(ToyKind::Constant);
  auto sig = ToyPolicy::make(ToyKind::Sigmoid);
  CHECK(up.kappa == 2000.0);
  CHECK(sig.kappa == 0.005);
  CHECK(sig.lambda == 1000.0);
  CHECK(toy_weight(flat, 0) == 0.5);
  CHECK(toy_weight(flat, 1e6) == 0.5);
  CHECK(toy_weight(sig, 1000) == 0.5);
  CHECK(toy_weight(up, 0) == 0.0);
  CHECK(toy_weight(up, 1000) == 0.5);
  CHECK(toy_weight(up, 2000) == 1.0);
  CHECK(toy_weight(up, 4000) == 1.0);
  CHECK(toy_weight(down, 0) == 1.0);
  CHECK(toy_weight(down, 2000) == 0.0);
  CHECK(toy_weight(down, 4000) == 0.0);
  CHECK(toy_weight(sig, 1e9) == 1.0);
  CHECK(toy_weight(sig, 0) == doctest::Approx(1.0 / (1.0 + std::exp(5.0))));
}

TEST_CASE("toy weights stay in the unit interval") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> steps(0.0, 1e6), kap(1e-4, 1e4), lam(-1e5, 1e5);
  for (int t = 0; t < 2000; ++t) {
    for (auto kind : {ToyKind::LinearUp, ToyKind::LinearDown, ToyKind::Constant, ToyKind::Sigmoid}) {
      ToyPolicy p{kind, kap(rng), lam(rng)};
      const double w = toy_weight(p, steps(rng));
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
    }
  }
  CHECK_THROWS_AS((ToyPolicy{ToyKind::LinearUp, 0.0, 0.0}.validate()), InvalidArgument);
  CHECK_THROWS_AS((ToyPolicy{ToyKind::Sigmoid, -1.0, 0.0}.validate()), InvalidArgument);
}

TEST_CASE("batch-mean ablation") {
  CHECK(batch_mean_ablation(std::vector<double>{1, 0}) == std::vector<double>{0.5, 0.5});
  CHECK(batch_mean_ablation(std::vector<double>{0.3, 0.3, 0.3}) == std::vector<double>{0.3, 0.3, 0.3});
  auto m = batch_mean_ablation(std::vector<double>{0.2, 0.4, 0.9});
  for (double x : m) CHECK(x == doctest::Approx(0.5));
  CHECK_THROWS_AS(batch_mean_ablation(std::vector<double>{}), InvalidArgument);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> w(1 + t % 17);
    for (auto& x : w) x = u(rng);
    auto a = batch_mean_ablation(w);
    double s0 = 0, s1 = 0;
    for (std::size_t k = 0; k < w.size(); ++k) s0 += w[k], s1 += a[k];
    CHECK(s1 == doctest::Approx(s0).epsilon(1e-14));
  }
}

TEST_CASE("schedule function") {
  ScheduleFunction s;  // 30% start, +10% every 300 steps
  CHECK(available_portion(s, 0) == 0.3);
  CHECK(available_portion(s, 299) == 0.3);
  CHECK(available_portion(s, 300) == doctest::Approx(0.4));
  CHECK(available_portion(s, 1u << 30) == 1.0);
  double prev = 0.0;
  for (std::size_t i = 0; i < 5000; ++i) {
    const double p = available_portion(s, i);
    CHECK(p >= prev);
    prev = p;
  }
  CHECK(prev == 1.0);
  CHECK_THROWS_AS((ScheduleFunction{0.0, 0.1, 10}.validate()), InvalidArgument);
  CHECK_THROWS_AS((ScheduleFunction{0.5, 1.5, 10}.validate()), InvalidArgument);
  CHECK_THROWS_AS((ScheduleFunction{0.5, 0.1, 0}.validate()), InvalidArgument);
}

TEST_CASE("prefix size") {
  CHECK(prefix_size(0.3, 10) == 3);
  CHECK(prefix_size(0.1 * 3, 10) == 3);  // 0.30000000000000004 * 10 must not round up to 4
  CHECK(prefix_size(0.31, 10) == 4);
  CHECK(prefix_size(1e-9, 10) == 1);
  CHECK(prefix_size(1.0, 7) == 7);
  CHECK(prefix_size(0.5, 0) == 0);
}

TEST_CASE("ordering by difficulty") {
  auto ordered = order_by_difficulty(with_lengths({5, 2, 9}), DifficultyMeasure::SequenceLength);
  REQUIRE(ordered.size() == 3);
  CHECK(ordered.entries[0].original_index == 1);
  CHECK(ordered.entries[1].original_index == 0);
  CHECK(ordered.entries[2].original_index == 2);

  auto same = order_by_difficulty(with_lengths({4, 4, 4, 4}), DifficultyMeasure::SequenceLength);
  for (std::size_t k = 0; k < 4; ++k) CHECK(same.entries[k].original_index == k);

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> len(1, 20);
  std::vector<std::size_t> lengths(100);
  for (auto& l : lengths) l = len(rng);
  auto got = order_by_difficulty(with_lengths(lengths), DifficultyMeasure::SequenceLength);
  auto expected = reference_order(std::vector<double>(lengths.begin(), lengths.end()));
  for (std::size_t k = 0; k < 100; ++k) CHECK(got.entries[k].original_index == expected[k]);
}

TEST_CASE("missing difficulty names the example") {
  auto d = with_lengths({3, 4});
  d.examples[1].sequence_length.reset();
  CHECK_THROWS_WITH_AS(order_by_difficulty(d, DifficultyMeasure::SequenceLength), doctest::Contains("example 1"),
                       InvalidArgument);
  CHECK_THROWS_WITH_AS(order_by_difficulty(d, DifficultyMeasure::ReferenceLoss), doctest::Contains("example 0"),
                       InvalidArgument);
}

TEST_CASE("batch sampling stays inside the prefix") {
  OrderedDataset od;
  for (std::size_t k = 0; k < 100; ++k) od.entries.push_back({99 - k, static_cast<double>(k)});
  ScheduleFunction s{0.3, 0.1, 10};
  BatchSampler sampler(5);
  for (std::size_t i = 0; i < 200; ++i) {
    const std::size_t prefix = prefix_size(available_portion(s, i), 100);
    for (std::size_t idx : sample_batch(od, s, i, 16, sampler)) CHECK(idx >= 100 - prefix);
  }
  ScheduleFunction tiny{0.01, 0.01, 1000};
  for (std::size_t idx : sample_batch(od, tiny, 0, 8, sampler)) CHECK(idx == 99);
  OrderedDataset empty;
  CHECK_THROWS_AS(sample_batch(empty, s, 0, 4, sampler), InvalidArgument);
}

TEST_CASE("sampler is deterministic and uniform over the prefix") {
  BatchSampler a(11), b(11);
  CHECK(a.draw(50, 64) == b.draw(50, 64));
  // Shared draws: same seed, different prefixes, still aligned afterwards.
  a.draw(10, 5);
  b.draw(90, 5);
  CHECK(a.draw(40, 8) == b.draw(40, 8));

  BatchSampler s(99);
  const std::size_t prefix = 10, n = 100000;
  std::vector<std::size_t> counts(prefix, 0);
  for (std::size_t k : s.draw(prefix, n)) counts.at(k)++;
  const double p = 1.0 / prefix, mu = n * p, sd = std::sqrt(n * p * (1 - p));
  for (std::size_t c : counts) CHECK(std::abs(static_cast<double>(c) - mu) < 3 * sd);
}

TEST_CASE("weighted loss") {
  ag::Graph g;
  auto losses = g.constant(Tensor::vector({1.0, 2.0, 3.0, 6.0}));
  CHECK(weighted_loss(losses, std::vector<double>{1, 1, 1, 1}).value().item() == 3.0);
  CHECK(weighted_loss(losses, std::vector<double>{0, 0, 0, 0}).value().item() == 0.0);
  CHECK(weighted_loss(losses, std::vector<double>{1, 0, 0, 1}).value().item() == doctest::Approx(7.0 / 4.0));
  CHECK_THROWS_AS(weighted_loss(losses, std::vector<double>{1, 1}), ShapeError);
  CHECK_THROWS_AS(weighted_loss(losses, std::vector<double>{1, 1, 1, 1.5}), InvalidArgument);
  CHECK_THROWS_AS(weighted_loss(losses, std::vector<double>{1, 1, 1, -0.1}), InvalidArgument);
}

TEST_CASE("weighted loss gradient scales with the weights") {
  nn::Mlp mlp = nn::Mlp::init({3, 4, 2}, 5);
  const Tensor x = Tensor::matrix(3, 3, {0.1, -0.2, 0.3, 1.0, 0.5, -0.5, -1.0, 0.2, 0.7});
  const std::vector<std::size_t> labels{0, 1, 1};
  auto grad_with = [&](std::vector<double> w) {
    ag::Graph g;
    auto p = nn::bind(g, mlp);
    auto l = weighted_loss(ag::softmax_cross_entropy(nn::forward(g.constant(x), p), labels), w);
    auto gm = g.backward(l);
    std::vector<Tensor> out;
    for (auto v : p) out.push_back(gm[v]);
    return out;
  };
  auto unit = grad_with({1, 1, 1});
  auto half = grad_with({0.5, 0.5, 0.5});
  auto zero = grad_with({0, 0, 0});
  for (std::size_t t = 0; t < unit.size(); ++t)
    for (std::size_t i = 0; i < unit[t].size(); ++i) {
      CHECK(half[t][i] == 0.5 * unit[t][i]);
      CHECK(zero[t][i] == 0.0);
    }

  // Against (1/n) * sum_k w_k * grad(loss_k) built from single-example graphs.
  const std::vector<double> w{0.2, 0.9, 0.4};
  auto mixed = grad_with(w);
  std::vector<Tensor> expected;
  for (const auto& t : mlp.params) expected.emplace_back(t.shape());
  for (std::size_t k = 0; k < 3; ++k) {
    ag::Graph g;
    auto p = nn::bind(g, mlp);
    std::vector<std::size_t> idx{k};
    const Tensor xk = Tensor::matrix(1, 3, {x.at(k, 0), x.at(k, 1), x.at(k, 2)});
    std::vector<std::size_t> lk{labels[k]};
    auto gm = g.backward(ag::sum(ag::softmax_cross_entropy(nn::forward(g.constant(xk), p), lk)));
    for (std::size_t t = 0; t < p.size(); ++t)
      for (std::size_t i = 0; i < expected[t].size(); ++i) expected[t][i] += w[k] * gm[p[t]][i] / 3.0;
  }
  for (std::size_t t = 0; t < mixed.size(); ++t)
    for (std::size_t i = 0; i < mixed[t].size(); ++i) CHECK(mixed[t][i] == doctest::Approx(expected[t][i]));
}

TEST_CASE("weight statistics") {
  auto a = weight_stats(std::vector<double>{0.5, 0.5});
  CHECK(a.mean == 0.5);
  CHECK(a.sigma_normal == 0.0);
  auto b = weight_stats(std::vector<double>{0.0, 1.0});
  CHECK(b.mean == 0.5);
  CHECK(b.sigma_normal == 1.0);
  auto z = weight_stats(std::vector<double>{0.0, 0.0, 0.0});
  CHECK(z.sigma_normal == 0.0);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> w(2 + t % 30);
    for (auto& x : w) x = u(rng);
    long double s = 0;
    for (double x : w) s += x;
    const long double m = s / w.size();
    long double ss = 0;
    for (double x : w) ss += (x - m) * (x - m);
    const double cv = static_cast<double>(std::sqrt(ss / w.size()) / m);
    auto st = weight_stats(w);
    CHECK(std::abs(st.mean - static_cast<double>(m)) < 1e-12);
    CHECK(std::abs(st.sigma_normal - cv) < 1e-12);
  }
}

TEST_CASE("pearson correlation") {
  std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 6, 8, 10}, ny{-1, -2, -3, -4, -5};
  CHECK(pearson(x, x) == doctest::Approx(1.0));
  CHECK(pearson(x, y) == doctest::Approx(1.0));
  CHECK(pearson(x, ny) == doctest::Approx(-1.0));
  std::vector<double> flat{3, 3, 3, 3, 3};
  CHECK_THROWS_AS(pearson(x, flat), UndefinedStatistic);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{2}), UndefinedStatistic);
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), ShapeError);
}

TEST_CASE("length correlates negatively with gradient norm on varlen data") {
  datasets::SyntheticSpec spec;
  spec.kind = datasets::TaskKind::VarlenSequences;
  spec.size = 400;
  spec.features = 16;
  spec.classes = 10;
  spec.noise = 1.0;
  spec.seed = 3;
  auto data = datasets::generate(spec);
  auto model = nn::Mlp::init({16, 16, 10}, 1);
  CHECK(difficulty_gradient_correlation(data, model, DifficultyMeasure::SequenceLength) <= -0.5);

  spec.min_length = spec.max_length = 10;
  auto fixed = datasets::generate(spec);
  CHECK_THROWS_AS(difficulty_gradient_correlation(fixed, model, DifficultyMeasure::SequenceLength),
                  UndefinedStatistic);
}

TEST_CASE("per-example gradient norms match single-example backprop") {
  auto data = with_lengths({1, 2, 3});
  auto model = nn::Mlp::init({1, 3, 2}, 4);
  auto norms = per_example_gradient_norms(data, model);
  REQUIRE(norms.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    ag::Graph g;
    auto p = nn::bind(g, model);
    std::vector<std::size_t> idx{k};
    std::vector<std::size_t> lab{data.examples[k].label};
    auto gm = g.backward(ag::sum(ag::softmax_cross_entropy(nn::forward(g.constant(data.features(idx)), p), lab)));
    double s = 0;
    for (auto v : p) s += std::pow(l2_norm(gm[v]), 2);
    CHECK(norms[k] == doctest::Approx(std::sqrt(s)).epsilon(1e-12));
  }
}
