// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "currlab/mlp.hpp"
#include "currlab/tensor.hpp"

namespace currlab::datasets {

struct Example {
  std::vector<double> features;
  std::size_t label = 0;
  std::optional<std::size_t> sequence_length;
  std::optional<double> reference_loss;

  friend bool operator==(const Example&, const Example&) = default;
};

struct Dataset {
  std::vector<Example> examples;
  std::size_t classes = 0;
  std::size_t feature_dim = 0;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }

  /// Feature matrix [idx.size(), feature_dim] for the selected rows.
  Tensor features(std::span<const std::size_t> idx) const;
  std::vector<std::size_t> labels(std::span<const std::size_t> idx) const;
  Tensor all_features() const;
  std::vector<std::size_t> all_labels() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class TaskKind { Blobs, VarlenSequences };

/// Generator parameters. Blobs place class centres on the unit sphere
/// (antipodal for two classes) and add isotropic Gaussian noise of scale
/// `noise`. With two classes the Bayes error is Phi(-1 / noise), so the
/// classes overlap noticeably once noise exceeds ~0.4.
struct SyntheticSpec {
  TaskKind kind = TaskKind::Blobs;
  std::size_t size = 1000;
  std::size_t classes = 2;
  std::size_t features = 4;
  double noise = 0.5;
  std::size_t min_length = 4;
  std::size_t max_length = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

Dataset gen_blobs(const SyntheticSpec& spec);

/// Each example is the mean of L token vectors (per-coordinate scale
/// `noise`) plus the class centre scaled by 1/sqrt(L); L is drawn uniformly
/// from [min_length, max_length] and stored as sequence_length. Input norm,
/// and therefore gradient norm under a fresh model, shrinks with L.
Dataset gen_varlen_sequences(const SyntheticSpec& spec);

Dataset generate(const SyntheticSpec& spec);

/// Fills reference_loss with the per-example cross-entropy under `model`.
Dataset compute_reference_losses(Dataset dataset, const nn::Mlp& model);

/// Header: label,f0..fk[,sequence_length][,difficulty]. The difficulty
/// column populates reference_loss.
Dataset parse_csv(std::istream& in);
Dataset load_csv(const std::filesystem::path& path);
void write_csv(const Dataset& dataset, std::ostream& out);
void write_csv(const Dataset& dataset, const std::filesystem::path& path);

struct Splits {
  Dataset train;
  Dataset dev;
  Dataset test;
};

/// Largest-remainder rounding of fractions * n: floors first, leftover units
/// go to the largest fractional parts (earlier split wins ties).
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions);

/// Deterministic shuffle, then contiguous slices of split_sizes().
Splits split(const Dataset& dataset, const std::array<double, 3>& fractions, std::uint64_t seed);

/// Two disjoint halves (first gets the extra example when odd), used for
/// selection vs. reporting.
std::pair<Dataset, Dataset> halve(const Dataset& dataset, std::uint64_t seed);

}  // namespace currlab::datasets
