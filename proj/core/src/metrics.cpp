#include "idac/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "idac/error.hpp"
#include "idac/numerics.hpp"

namespace idac {

namespace {

void check_binary(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::Shape, "scores and labels differ in length");
  bool pos = false;
  bool neg = false;
  for (int y : labels) {
    if (y == 1) {
      pos = true;
    } else if (y == 0) {
      neg = true;
    } else {
      fail(ErrorKind::InvalidLabel, fmt::format("binary metric got label {}", y));
    }
  }
  if (!pos || !neg) fail(ErrorKind::UndefinedMetric, "AUROC needs both classes present");
}

// Assumes check_binary passed. `order` is scratch space of size n.
double auroc_unchecked(std::span<const double> scores, std::span<const int> labels, std::vector<std::size_t>& order) {
  const std::size_t n = scores.size();
  order.resize(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of midranks (1-based, doubled to stay integral) over positives.
  double rank_sum2 = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double doubled_midrank = static_cast<double>(i + 1 + j + 1);
    for (std::size_t m = i; m <= j; ++m) {
      if (labels[order[m]] == 1) {
        rank_sum2 += doubled_midrank;
        ++n_pos;
      }
    }
    i = j + 1;
  }
  const std::size_t n_neg = n - n_pos;
  // U = R_pos - n_pos (n_pos + 1) / 2, counted in half-units so every step is exact.
  const double u2 = rank_sum2 - static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return (u2 / 2.0) / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double percentile(std::vector<double> sorted_values, double q) {
  const double pos = q * static_cast<double>(sorted_values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted_values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_binary(scores, labels);
  std::vector<std::size_t> order;
  return auroc_unchecked(scores, labels, order);
}

ConfidenceInterval bootstrap_ci(std::span<const double> scores, std::span<const int> labels, std::size_t n_resamples,
                                std::uint64_t seed, double confidence, unsigned threads) {
  check_binary(scores, labels);
  if (n_resamples < 1) fail(ErrorKind::InvalidConfig, "n_resamples must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) fail(ErrorKind::InvalidConfig, "confidence must lie in (0, 1)");
  const std::size_t n = scores.size();
  const Rng root(seed);
  std::vector<double> values(n_resamples);

  auto run_one = [&](std::size_t b, std::vector<double>& s, std::vector<int>& y, std::vector<std::size_t>& order) {
    Rng rng = root.substream(b);
    constexpr int kMaxRedraws = 10000;
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
      std::size_t pos = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(rng.below(n));
        s[i] = scores[idx];
        y[i] = labels[idx];
        pos += static_cast<std::size_t>(y[i]);
      }
      if (pos != 0 && pos != n) {
        values[b] = auroc_unchecked(s, y, order);
        return;
      }
    }
    fail(ErrorKind::UndefinedMetric, "bootstrap kept drawing single-class resamples");
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_resamples)));
  if (workers == 1) {
    std::vector<double> s(n);
    std::vector<int> y(n);
    std::vector<std::size_t> order;
    for (std::size_t b = 0; b < n_resamples; ++b) run_one(b, s, y, order);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          std::vector<double> s(n);
          std::vector<int> y(n);
          std::vector<std::size_t> order;
          for (std::size_t b = next++; b < n_resamples; b = next++) run_one(b, s, y, order);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::sort(values.begin(), values.end());
  const double tail = (1.0 - confidence) / 2.0;
  return {percentile(values, tail), percentile(values, 1.0 - tail)};
}

ThresholdedMetrics thresholded_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_binary(scores, labels);
  ThresholdedMetrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++m.tp;
    if (predicted && !actual) ++m.fp;
    if (!predicted && !actual) ++m.tn;
    if (!predicted && actual) ++m.fn;
  }
  auto ratio = [&](std::size_t num, std::size_t den) {
    if (den == 0) {
      m.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.recall = ratio(m.tp, m.tp + m.fn);
  const double specificity = ratio(m.tn, m.tn + m.fp);
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.balanced_accuracy = 0.5 * (m.recall + specificity);
  m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn);
  return m;
}

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, const EvalSettings& settings) {
  MetricsReport r;
  r.auroc = auroc(scores, labels);
  const auto ci = bootstrap_ci(scores, labels, settings.n_bootstrap, settings.seed, 0.95, settings.threads);
  r.auroc_ci_low = ci.low;
  r.auroc_ci_high = ci.high;
  const auto t = thresholded_metrics(scores, labels, settings.threshold);
  r.balanced_accuracy = t.balanced_accuracy;
  r.f1 = t.f1;
  r.precision = t.precision;
  r.recall = t.recall;
  r.degenerate = t.degenerate;
  r.threshold = settings.threshold;
  r.n_bootstrap = settings.n_bootstrap;
  r.seed = settings.seed;
  r.n_samples = scores.size();
  return r;
}

std::string format_point_ci(double point, double low, double high, int decimals) {
  return fmt::format("{:.{}f} [{:.{}f}, {:.{}f}]", 100.0 * point, decimals, 100.0 * low, decimals, 100.0 * high,
                     decimals);
}

nlohmann::json to_json(const MetricsReport& r) {
  return {{"auroc", r.auroc},
          {"auroc_ci_low", r.auroc_ci_low},
          {"auroc_ci_high", r.auroc_ci_high},
          {"balanced_accuracy", r.balanced_accuracy},
          {"f1", r.f1},
          {"precision", r.precision},
          {"recall", r.recall},
          {"degenerate", r.degenerate},
          {"threshold", r.threshold},
          {"n_bootstrap", r.n_bootstrap},
          {"seed", r.seed},
          {"n_samples", r.n_samples}};
}

MetricsReport metrics_report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.auroc = j.at("auroc").get<double>();
    r.auroc_ci_low = j.at("auroc_ci_low").get<double>();
    r.auroc_ci_high = j.at("auroc_ci_high").get<double>();
    r.balanced_accuracy = j.at("balanced_accuracy").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.degenerate = j.value("degenerate", false);
    r.threshold = j.at("threshold").get<double>();
    r.n_bootstrap = j.at("n_bootstrap").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.n_samples = j.value("n_samples", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Schema, fmt::format("metrics report: {}", e.what()));
  }
  return r;
}

std::string render_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  const std::vector<std::string> header = {"Run", "AUROC", "Bal. Acc.", "F1 score", "Precision", "Recall"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& [name, r] : rows) {
    cells.push_back({name, format_point_ci(r.auroc, r.auroc_ci_low, r.auroc_ci_high),
                     fmt::format("{:.1f}", 100.0 * r.balanced_accuracy), fmt::format("{:.1f}", 100.0 * r.f1),
                     fmt::format("{:.1f}", 100.0 * r.precision), fmt::format("{:.1f}", 100.0 * r.recall)});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      out += c == 0 ? fmt::format("{:<{}}", cells[r][c], width[c]) : fmt::format("  {:>{}}", cells[r][c], width[c]);
    }
    out += '\n';
    if (r == 0) out += std::string(out.size() - 1, '-') + '\n';
  }
  return out;
}

}  // namespace idac
