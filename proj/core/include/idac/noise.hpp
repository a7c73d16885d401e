#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "idac/data.hpp"

namespace idac {

/// Exact provenance of a symmetric label-noise injection.
struct NoiseRecord {
  double rate = 0.0;
  std::uint64_t seed = 0;
  /// Dataset row indices, ascending; all in the train split.
  std::vector<std::size_t> flipped_indices;
  /// Label before injection, aligned with flipped_indices.
  std::vector<int> original_labels;
  /// Label after injection, aligned with flipped_indices.
  std::vector<int> noisy_labels;

  friend bool operator==(const NoiseRecord&, const NoiseRecord&) = default;
};

struct NoisyDataset {
  Dataset dataset;
  NoiseRecord record;
};

/// Number of train labels a rate corrupts: round(rate * n_train).
std::size_t noise_flip_count(double rate, std::size_t n_train);

/// Replaces exactly round(rate * N_train) train labels, chosen without
/// replacement, each by a uniformly drawn different class (a flip when k = 2).
/// Validation and test rows are never touched.
NoisyDataset inject_noise(const Dataset& dataset, double rate, std::uint64_t seed);

/// Restores original_labels at the recorded rows.
Dataset undo_noise(const Dataset& noisy, const NoiseRecord& record);
/// Writes noisy_labels at the recorded rows of a dataset.
Dataset apply_noise(const Dataset& clean, const NoiseRecord& record);

nlohmann::json to_json(const NoiseRecord& record);
NoiseRecord noise_record_from_json(const nlohmann::json& j);
void save_noise_record(const NoiseRecord& record, const std::filesystem::path& path);

}  // namespace idac
