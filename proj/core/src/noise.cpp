#include "idac/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "idac/error.hpp"

namespace idac {

std::size_t noise_flip_count(double rate, std::size_t n_train) {
  if (!(rate >= 0.0 && rate <= 1.0)) fail(ErrorKind::InvalidConfig, fmt::format("noise rate {} outside [0, 1]", rate));
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n_train)));
}

NoisyDataset inject_noise(const Dataset& dataset, double rate, std::uint64_t seed) {
  const auto train_rows = dataset.rows_of(Split::Train);
  const std::size_t flips = noise_flip_count(rate, train_rows.size());
  if (train_rows.empty()) fail(ErrorKind::InvalidInput, "training split is empty");

  NoisyDataset out{dataset, {}};
  out.record.rate = rate;
  out.record.seed = seed;
  if (flips == 0) return out;

  // Partial Fisher-Yates: the first `flips` slots become a uniform sample without replacement.
  Rng rng = substream(Rng(seed), Stream::Noise);
  auto pool = train_rows;
  for (std::size_t i = 0; i < flips; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(flips));
  std::sort(chosen.begin(), chosen.end());

  const auto k = static_cast<std::uint64_t>(dataset.num_classes);
  for (std::size_t row : chosen) {
    const int original = dataset.labels[row];
    int replacement = static_cast<int>(rng.below(k - 1));
    if (replacement >= original) ++replacement;
    out.dataset.labels[row] = replacement;
    out.record.flipped_indices.push_back(row);
    out.record.original_labels.push_back(original);
    out.record.noisy_labels.push_back(replacement);
  }
  out.dataset.provenance += fmt::format(" noise={} seed={}", rate, seed);
  return out;
}

namespace {

Dataset write_labels(const Dataset& source, const NoiseRecord& record, const std::vector<int>& labels) {
  if (record.flipped_indices.size() != labels.size()) fail(ErrorKind::Schema, "noise record arrays differ in length");
  Dataset out = source;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t row = record.flipped_indices[i];
    if (row >= out.size() || out.split[row] != Split::Train) {
      fail(ErrorKind::Schema, fmt::format("noise record row {} is not a train row", row));
    }
    out.labels[row] = labels[i];
  }
  return out;
}

}  // namespace

Dataset undo_noise(const Dataset& noisy, const NoiseRecord& record) {
  return write_labels(noisy, record, record.original_labels);
}

Dataset apply_noise(const Dataset& clean, const NoiseRecord& record) {
  return write_labels(clean, record, record.noisy_labels);
}

nlohmann::json to_json(const NoiseRecord& record) {
  return {{"rate", record.rate},
          {"seed", record.seed},
          {"flip_count", record.flipped_indices.size()},
          {"flipped_indices", record.flipped_indices},
          {"original_labels", record.original_labels},
          {"noisy_labels", record.noisy_labels}};
}

NoiseRecord noise_record_from_json(const nlohmann::json& j) {
  NoiseRecord r;
  try {
    r.rate = j.at("rate").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.flipped_indices = j.at("flipped_indices").get<std::vector<std::size_t>>();
    r.original_labels = j.at("original_labels").get<std::vector<int>>();
    r.noisy_labels = j.value("noisy_labels", std::vector<int>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Schema, fmt::format("noise record: {}", e.what()));
  }
  return r;
}

void save_noise_record(const NoiseRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  out << to_json(record).dump(2) << '\n';
}

}  // namespace idac
