#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "idac/numerics.hpp"

namespace idac {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string_view to_string(Split split);
/// "train", "val"/"validation", "test". Throws Parse.
Split parse_split(std::string_view text);

struct Dataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<Split> split;
  std::size_t num_classes = 2;
  std::vector<std::string> feature_names;
  std::string provenance;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  std::size_t count(Split s) const;
  std::vector<std::size_t> rows_of(Split s) const;

  /// Shapes agree, labels in range, features finite. With require_all_splits,
  /// every split must also be non-empty.
  void validate(bool require_all_splits = false) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct CsvSchema {
  /// Empty: every column other than the label and split columns, in file order.
  std::vector<std::string> feature_columns;
  std::string label_column = "label";
  std::string split_column = "split";
  /// When false a missing split column is a schema error; otherwise all rows are train.
  bool split_optional = true;
  /// Inferred as max(label) + 1 (at least 2) when absent.
  std::optional<std::size_t> num_classes;
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
/// Header: feature names, "label", "split". Values use shortest round-trip formatting.
void save_csv(const Dataset& dataset, const std::filesystem::path& path);

/// Magic "IDACDS01", u64 LE header length, JSON header {n, d, k, splits,
/// feature_names, provenance}; then n*d LE doubles (row-major), n int32
/// labels, n int32 split tags.
void save_binary(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_binary(const std::filesystem::path& path);

/// Dispatches on extension: ".bin" is binary, anything else CSV.
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

enum class SyntheticKind { TwoGaussians, TwoMoons };

std::string_view to_string(SyntheticKind kind);
SyntheticKind parse_synthetic_kind(std::string_view text);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

struct SyntheticParams {
  std::size_t dim = 2;
  /// two_gaussians: class 1 is centred at +mean, class 0 at -mean.
  /// Empty means (mu, 0, ..., 0).
  std::vector<double> mean;
  double mu = 1.0;
  double sigma = 1.0;
  /// two_moons: isotropic Gaussian jitter; extra dimensions are pure noise.
  double moon_noise = 0.1;

  std::vector<double> resolved_mean() const;
};

/// Binary dataset; labels alternate 0/1 within each split, each split drawn
/// from its own substream of `seed`. Rows are ordered train, val, test.
Dataset gen_synthetic(SyntheticKind kind, const SplitSizes& sizes, const SyntheticParams& params, std::uint64_t seed);

nlohmann::json to_json(const SyntheticParams& params);

/// Bayes-optimal AUROC of the two_gaussians problem: Phi(sqrt(2) |mean| / sigma).
double two_gaussians_bayes_auroc(const SyntheticParams& params);

struct BatchIterator {
  std::size_t batch_size = 512;
  std::uint64_t seed = 0;
  bool drop_last = false;
  bool shuffle = true;
};

struct Batch {
  Matrix features;
  std::vector<int> labels;
  /// Dataset row index of each batch row.
  std::vector<std::size_t> rows;
};

/// Rows of `split` in a seeded per-(seed, epoch) order, cut into batches.
std::vector<Batch> batches(const Dataset& dataset, Split split, const BatchIterator& iterator, int epoch);

/// All rows of one split in dataset order.
Batch select_split(const Dataset& dataset, Split split);

}  // namespace idac
