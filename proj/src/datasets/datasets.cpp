// SPDX-License-Identifier: Apache-2.0
#include "currlab/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "currlab/error.hpp"

namespace currlab::datasets {

Tensor Dataset::features(std::span<const std::size_t> idx) const {
  Tensor out(Shape{std::max<std::size_t>(idx.size(), 1), feature_dim});
  if (idx.empty()) throw InvalidArgument("dataset: empty selection");
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& f = examples.at(idx[r]).features;
    std::copy(f.begin(), f.end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * feature_dim));
  }
  return out;
}

std::vector<std::size_t> Dataset::labels(std::span<const std::size_t> idx) const {
  std::vector<std::size_t> out(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) out[r] = examples.at(idx[r]).label;
  return out;
}

Tensor Dataset::all_features() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  return features(idx);
}

std::vector<std::size_t> Dataset::all_labels() const {
  std::vector<std::size_t> out(size());
  for (std::size_t r = 0; r < size(); ++r) out[r] = examples[r].label;
  return out;
}

void SyntheticSpec::validate() const {
  if (classes < 2) throw InvalidArgument("synthetic spec: need at least 2 classes");
  if (features == 0) throw InvalidArgument("synthetic spec: feature dimension must be positive");
  if (size < 2 * classes) throw InvalidArgument("synthetic spec: size must be >= 2 * classes");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw InvalidArgument("synthetic spec: noise must be >= 0");
  if (kind == TaskKind::VarlenSequences && (min_length < 1 || min_length > max_length))
    throw InvalidArgument("synthetic spec: need 1 <= min_length <= max_length");
}

namespace {

std::vector<std::vector<double>> class_centres(const SyntheticSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto unit = [&] {
    std::vector<double> u(spec.features);
    double n = 0.0;
    do {
      n = 0.0;
      for (double& x : u) {
        x = normal(rng);
        n += x * x;
      }
    } while (n == 0.0);
    n = std::sqrt(n);
    for (double& x : u) x /= n;
    return u;
  };
  std::vector<std::vector<double>> centres;
  if (spec.classes == 2) {
    auto u = unit();
    auto v = u;
    for (double& x : v) x = -x;
    centres = {u, v};
  } else {
    for (std::size_t c = 0; c < spec.classes; ++c) centres.push_back(unit());
  }
  return centres;
}

}  // namespace

Dataset gen_blobs(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto centres = class_centres(spec, rng);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset d;
  d.classes = spec.classes;
  d.feature_dim = spec.features;
  d.examples.reserve(spec.size);
  for (std::size_t k = 0; k < spec.size; ++k) {
    Example e;
    e.label = k % spec.classes;
    e.features.resize(spec.features);
    for (std::size_t j = 0; j < spec.features; ++j)
      e.features[j] = centres[e.label][j] + spec.noise * normal(rng);
    d.examples.push_back(std::move(e));
  }
  return d;
}

Dataset gen_varlen_sequences(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto centres = class_centres(spec, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length(spec.min_length, spec.max_length);

  Dataset d;
  d.classes = spec.classes;
  d.feature_dim = spec.features;
  d.examples.reserve(spec.size);
  std::vector<double> pooled(spec.features);
  for (std::size_t k = 0; k < spec.size; ++k) {
    Example e;
    e.label = k % spec.classes;
    const std::size_t L = length(rng);
    std::fill(pooled.begin(), pooled.end(), 0.0);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t j = 0; j < spec.features; ++j) pooled[j] += spec.noise * normal(rng);
    const double inv_len = 1.0 / static_cast<double>(L);
    const double signal = 1.0 / std::sqrt(static_cast<double>(L));
    e.features.resize(spec.features);
    for (std::size_t j = 0; j < spec.features; ++j)
      e.features[j] = pooled[j] * inv_len + signal * centres[e.label][j];
    e.sequence_length = L;
    d.examples.push_back(std::move(e));
  }
  return d;
}

Dataset generate(const SyntheticSpec& spec) {
  return spec.kind == TaskKind::Blobs ? gen_blobs(spec) : gen_varlen_sequences(spec);
}

Dataset compute_reference_losses(Dataset dataset, const nn::Mlp& model) {
  if (dataset.empty()) return dataset;
  if (model.shape.inputs != dataset.feature_dim || model.shape.outputs != dataset.classes)
    throw ShapeError("reference model expects " + std::to_string(model.shape.inputs) + " features / " +
                     std::to_string(model.shape.outputs) + " classes, dataset has " +
                     std::to_string(dataset.feature_dim) + " / " + std::to_string(dataset.classes));
  const Tensor z = nn::logits(model, dataset.all_features());
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    double mx = z.at(r, 0);
    for (std::size_t c = 1; c < z.cols(); ++c) mx = std::max(mx, z.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) s += std::exp(z.at(r, c) - mx);
    dataset.examples[r].reference_loss = mx + std::log(s) - z.at(r, dataset.examples[r].label);
  }
  return dataset;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------
namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_number(std::string_view cell, std::size_t line, const char* column) {
  cell = trim(cell);
  T value{};
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc() || ptr != end || cell.empty())
    throw ParseError(std::string("invalid value '") + std::string(cell) + "' in column " + column, line);
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(value)) throw ParseError(std::string("non-finite value in column ") + column, line);
  return value;
}

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

}  // namespace

Dataset parse_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw ParseError("missing header row", std::max<std::size_t>(line_no, 1));

  const auto header = split_commas(line);
  std::optional<std::size_t> label_col, len_col, diff_col;
  std::map<std::size_t, std::size_t> feature_cols;  // feature index -> column
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto name = trim(header[c]);
    if (name == "label") {
      label_col = c;
    } else if (name == "sequence_length") {
      len_col = c;
    } else if (name == "difficulty") {
      diff_col = c;
    } else if (name.size() > 1 && name[0] == 'f') {
      const auto idx = parse_number<std::size_t>(name.substr(1), line_no, "header");
      if (!feature_cols.emplace(idx, c).second)
        throw ParseError("duplicate feature column " + std::string(name), line_no);
    } else {
      throw ParseError("unknown column '" + std::string(name) + "'", line_no);
    }
  }
  if (!label_col) throw ParseError("header lacks a 'label' column", line_no);
  if (feature_cols.empty()) throw ParseError("header lacks feature columns f0..fk", line_no);
  if (feature_cols.rbegin()->first + 1 != feature_cols.size())
    throw ParseError("feature columns must be f0..fk without gaps", line_no);

  Dataset d;
  d.feature_dim = feature_cols.size();
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no);
    Example e;
    e.label = parse_number<std::size_t>(cells[*label_col], line_no, "label");
    max_label = std::max(max_label, e.label);
    e.features.resize(d.feature_dim);
    for (const auto& [j, c] : feature_cols) e.features[j] = parse_number<double>(cells[c], line_no, "feature");
    if (len_col && !trim(cells[*len_col]).empty()) {
      e.sequence_length = parse_number<std::size_t>(cells[*len_col], line_no, "sequence_length");
      if (*e.sequence_length == 0) throw ParseError("sequence_length must be positive", line_no);
    }
    if (diff_col && !trim(cells[*diff_col]).empty())
      e.reference_loss = parse_number<double>(cells[*diff_col], line_no, "difficulty");
    d.examples.push_back(std::move(e));
  }
  d.classes = d.empty() ? 0 : max_label + 1;
  return d;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open dataset file " + path.string());
  return parse_csv(in);
}

void write_csv(const Dataset& d, std::ostream& out) {
  bool has_len = false, has_diff = false;
  for (const auto& e : d.examples) {
    has_len = has_len || e.sequence_length.has_value();
    has_diff = has_diff || e.reference_loss.has_value();
  }
  out << "label";
  for (std::size_t j = 0; j < d.feature_dim; ++j) out << ",f" << j;
  if (has_len) out << ",sequence_length";
  if (has_diff) out << ",difficulty";
  out << '\n';
  for (const auto& e : d.examples) {
    out << e.label;
    for (double x : e.features) out << ',' << format_double(x);
    if (has_len) {
      out << ',';
      if (e.sequence_length) out << *e.sequence_length;
    }
    if (has_diff) {
      out << ',';
      if (e.reference_loss) out << format_double(*e.reference_loss);
    }
    out << '\n';
  }
}

void write_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write dataset file " + path.string());
  write_csv(d, out);
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fr) {
  double total = 0.0;
  for (double f : fr) {
    if (!(f >= 0.0)) throw InvalidArgument("split: fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("split: fractions must sum to 1");

  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double raw = fr[k] * static_cast<double>(n);
    sizes[k] = static_cast<std::size_t>(std::floor(raw + 1e-9));
    rem[k] = raw - static_cast<double>(sizes[k]);
    used += sizes[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; used < n; ++k, ++used) sizes[order[k % 3]] += 1;
  return sizes;
}

namespace {
Dataset subset(const Dataset& d, std::span<const std::size_t> idx) {
  Dataset out;
  out.classes = d.classes;
  out.feature_dim = d.feature_dim;
  out.examples.reserve(idx.size());
  for (auto i : idx) out.examples.push_back(d.examples[i]);
  return out;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}
}  // namespace

Splits split(const Dataset& d, const std::array<double, 3>& fractions, std::uint64_t seed) {
  const auto sizes = split_sizes(d.size(), fractions);
  const auto idx = shuffled(d.size(), seed);
  std::span<const std::size_t> all(idx);
  Splits s;
  s.train = subset(d, all.subspan(0, sizes[0]));
  s.dev = subset(d, all.subspan(sizes[0], sizes[1]));
  s.test = subset(d, all.subspan(sizes[0] + sizes[1], sizes[2]));
  return s;
}

std::pair<Dataset, Dataset> halve(const Dataset& d, std::uint64_t seed) {
  const auto idx = shuffled(d.size(), seed);
  const std::size_t first = (d.size() + 1) / 2;
  std::span<const std::size_t> all(idx);
  return {subset(d, all.subspan(0, first)), subset(d, all.subspan(first))};
}

}  // namespace currlab::datasets
