#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace idac {

/// Tie-corrected AUROC, P(s+ > s-) + P(s+ = s-)/2, via midranks in O(n log n).
/// labels are 0/1. Throws UndefinedMetric unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;

  friend bool operator==(const ConfidenceInterval&, const ConfidenceInterval&) = default;
};

/// Percentile bootstrap of AUROC. Resample b draws its rows from substream b
/// of `seed`; resamples that contain a single class are redrawn from the same
/// substream. Percentiles use linear interpolation between order statistics.
ConfidenceInterval bootstrap_ci(std::span<const double> scores, std::span<const int> labels, std::size_t n_resamples,
                                std::uint64_t seed, double confidence = 0.95, unsigned threads = 1);

struct ThresholdedMetrics {
  double balanced_accuracy = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  /// Set when a zero denominator forced a metric to 0.
  bool degenerate = false;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Prediction is positive when score >= threshold.
ThresholdedMetrics thresholded_metrics(std::span<const double> scores, std::span<const int> labels, double threshold);

struct MetricsReport {
  double auroc = 0.0;
  double auroc_ci_low = 0.0;
  double auroc_ci_high = 0.0;
  double balanced_accuracy = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  bool degenerate = false;
  double threshold = 0.5;
  std::size_t n_bootstrap = 1000;
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

struct EvalSettings {
  double threshold = 0.5;
  std::size_t n_bootstrap = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, const EvalSettings& settings);

/// "93.3 [91.2, 95.6]" from fractions 0.933, 0.912, 0.956 (scaled to percent).
std::string format_point_ci(double point, double low, double high, int decimals = 1);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_report_from_json(const nlohmann::json& j);

/// Aligned text table: one row per (name, report), AUROC cell in point [low, high] form.
std::string render_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace idac
