#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "idac/config.hpp"
#include "idac/data.hpp"
#include "idac/metrics.hpp"
#include "idac/model.hpp"
#include "idac/noise.hpp"

namespace idac {

/// Per-epoch telemetry. Batch statistics are plain means over the epoch's batches.
struct EpochRecord {
  int epoch = 0;
  bool warmup = false;
  double train_loss = 0.0;
  /// Present for models with an abstention head (warm-up epochs included).
  std::optional<double> eta_hat;
  std::optional<double> abstain_rate;
  double lr = 0.0;
  /// Abstention weight in effect (DAC ramp value, IDAC constant, 0 otherwise and during warm-up).
  double alpha = 0.0;
  double val_auroc = 0.0;
  double wall_time_s = 0.0;
};

/// epochs.jsonl line; wall time is excluded so the file is reproducible byte for byte.
nlohmann::json to_json(const EpochRecord& record);

struct RunFailure {
  int epoch = 0;
  std::string message;
};

struct ExperimentResult {
  std::string run_id;
  TrainConfig config;
  /// IDAC noise estimate after policy resolution.
  std::optional<double> eta_tilde;
  std::vector<EpochRecord> epochs;
  /// argmax of validation AUROC, earliest on ties; -1 if no epoch completed.
  int selected_epoch = -1;
  double selected_val_auroc = 0.0;
  std::optional<MetricsReport> test;
  /// Test AUROC of the last completed epoch's weights, no model selection.
  std::optional<double> final_epoch_test_auroc;
  std::optional<RunFailure> failure;
  std::optional<NoiseRecord> noise;
  MlpState selected_state;
  MlpState final_state;
};

nlohmann::json summary_json(const ExperimentResult& result);

struct RunOptions {
  /// When set, epochs.jsonl, timings.jsonl, summary.json, checkpoint.bin and
  /// (with noise) noise_record.json are written here.
  std::optional<std::filesystem::path> output_dir;
  std::string run_id = "run";
  std::function<void(const EpochRecord&)> on_epoch;
  /// Worker threads for the bootstrap; never changes results.
  unsigned eval_threads = 1;
};

/// Fills input_dim / num_classes from the dataset and the abstention head from the loss.
MlpSpec resolve_model_spec(const TrainConfig& config, const Dataset& dataset);

/// Seed of the bootstrap stream a run with this base seed uses.
std::uint64_t bootstrap_seed(std::uint64_t seed);

/// Positive-class scores with any abstention column excluded.
std::vector<double> positive_scores(const MlpState& state, const Matrix& features);

/// Test-split MetricsReport for a model (the same path run() and eval use).
MetricsReport evaluate_model(const MlpState& state, const Dataset& dataset, Split split, const EvalSettings& settings);

/// Full training protocol on a clean dataset (noise, when configured, is injected into train only).
ExperimentResult run(const TrainConfig& config, const Dataset& dataset, const RunOptions& options = {});

// ---------------------------------------------------------------------------
// grid search

struct GridAxis {
  std::string key;
  std::vector<nlohmann::json> values;
};

struct GridSpec {
  std::vector<GridAxis> axes;

  std::size_t size() const;
};

/// {"loss.alpha": [1, 10, 20], "warmup_epochs": [10, 30, 50]}
GridSpec grid_from_json(const nlohmann::json& j);

using GridPoint = std::vector<std::pair<std::string, nlohmann::json>>;

/// Cartesian product, last axis fastest.
std::vector<GridPoint> enumerate_grid(const GridSpec& grid);
/// Stable label built from the assignments, e.g. "loss.alpha=1,warmup_epochs=10".
std::string grid_point_label(const GridPoint& point);

struct GridEntry {
  std::size_t index = 0;
  GridPoint point;
  std::optional<ExperimentResult> result;
  /// Set when the point failed to configure or threw during training.
  std::optional<std::string> error;
};

struct GridOptions {
  unsigned parallel = 1;
  std::optional<std::filesystem::path> output_dir;
  std::function<void(const GridEntry&)> on_done;
};

/// One run per grid point, every point seeded from the base config's seed.
/// Returned entries are ranked by selected validation AUROC (descending,
/// ties by grid index); failed points come last.
std::vector<GridEntry> grid_search(const nlohmann::json& base_config, const GridSpec& grid, const Dataset& dataset,
                                   const GridOptions& options = {});

nlohmann::json grid_results_json(const std::vector<GridEntry>& ranked);
std::string render_grid_table(const std::vector<GridEntry>& ranked);

}  // namespace idac
