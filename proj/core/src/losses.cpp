#include "idac/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "idac/error.hpp"

namespace idac {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::CE: return "CE";
    case LossKind::SCE: return "SCE";
    case LossKind::DAC: return "DAC";
    case LossKind::IDAC: return "IDAC";
    case LossKind::NCE: return "NCE";
    case LossKind::NGCE: return "NGCE";
    case LossKind::AGCE: return "AGCE";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (LossKind k : {LossKind::CE, LossKind::SCE, LossKind::DAC, LossKind::IDAC, LossKind::NCE, LossKind::NGCE,
                     LossKind::AGCE}) {
    if (upper == to_string(k)) return k;
  }
  fail(ErrorKind::InvalidConfig, fmt::format("unknown loss kind '{}'", name));
}

bool has_abstention(LossKind kind) noexcept { return kind == LossKind::DAC || kind == LossKind::IDAC; }

void LossSpec::validate() const {
  const auto name = to_string(kind);
  auto require = [&](const std::optional<double>& v, const char* field) {
    if (!v) fail(ErrorKind::InvalidConfig, fmt::format("{} requires '{}'", name, field));
    if (!std::isfinite(*v)) fail(ErrorKind::InvalidConfig, fmt::format("'{}' must be finite", field));
  };
  switch (kind) {
    case LossKind::CE:
    case LossKind::NCE:
      break;
    case LossKind::SCE:
      if (!(sce_log_clip < 0.0) || !std::isfinite(sce_log_clip)) {
        fail(ErrorKind::InvalidConfig, "sce_log_clip must be a finite negative number");
      }
      break;
    case LossKind::IDAC:
      require(eta_tilde, "eta_tilde");
      if (*eta_tilde < 0.0 || *eta_tilde > 1.0) fail(ErrorKind::InvalidConfig, "eta_tilde must lie in [0, 1]");
      [[fallthrough]];
    case LossKind::DAC:
      require(alpha, "alpha");
      if (*alpha < 0.0) fail(ErrorKind::InvalidConfig, "alpha must be >= 0");
      break;
    case LossKind::AGCE:
      require(a, "a");
      if (!(*a > 0.0)) fail(ErrorKind::InvalidConfig, "a must be > 0");
      [[fallthrough]];
    case LossKind::NGCE:
      require(q, "q");
      if (!(*q > 0.0)) fail(ErrorKind::InvalidConfig, "q must be > 0");
      break;
  }
}

namespace {

void check_batch(const Matrix& logits, std::span<const int> targets, std::size_t num_classes) {
  if (logits.rows() == 0) fail(ErrorKind::Shape, "empty batch");
  if (num_classes < 2) fail(ErrorKind::Shape, "need at least two classes");
  if (targets.size() != logits.rows()) {
    fail(ErrorKind::Shape, fmt::format("{} targets for {} logit rows", targets.size(), logits.rows()));
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= num_classes) {
      fail(ErrorKind::InvalidLabel, fmt::format("target {} outside [0, {})", t, num_classes));
    }
  }
}

void check_abstain_batch(const Matrix& logits, std::span<const int> targets) {
  if (logits.cols() < 3) {
    fail(ErrorKind::Shape, fmt::format("abstaining loss needs k+1 >= 3 logit columns, got {}", logits.cols()));
  }
  check_batch(logits, targets, logits.cols() - 1);
}

double mean_abstain_prob(const Matrix& probs) {
  const std::size_t k = probs.cols() - 1;
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) total += probs(r, k);
  return total / static_cast<double>(probs.rows());
}

// Shared first term of DAC and IDAC for one row:
//   s * (-log(p_t / s)),  s = 1 - p_abstain,
// with s floored at kAbstainFloor inside the log. Gradients are w.r.t. all
// k+1 logits and unscaled by the batch size.
struct AbstainRow {
  double term = 0.0;
  double s = 0.0;          // 1 - p_abstain, unfloored
  double log_s = 0.0;      // log of s
  bool floored = false;
  std::vector<double> p;   // softmax over k+1
  std::vector<double> ds;  // d s / d z
  std::vector<double> grad_term;
};

AbstainRow abstain_row(std::span<const double> z, int target) {
  const std::size_t k = z.size() - 1;
  AbstainRow row;
  row.p = softmax_stable(z);
  const double lse_all = log_sum_exp(z);
  const double lse_cls = log_sum_exp(z.first(k));
  row.log_s = lse_cls - lse_all;
  row.s = std::exp(row.log_s);
  const double a = row.p[k];

  row.ds.resize(k + 1);
  for (std::size_t j = 0; j < k; ++j) row.ds[j] = row.p[j] * a;
  row.ds[k] = -row.s * a;

  row.grad_term.assign(k + 1, 0.0);
  const auto t = static_cast<std::size_t>(target);
  if (row.s >= kAbstainFloor) {
    // -log(p_t / s) is CE over the k class logits alone.
    const double ce_k = lse_cls - z[t];
    row.term = row.s * ce_k;
    for (std::size_t j = 0; j < k; ++j) {
      const double q = std::exp(z[j] - lse_cls);
      const double dce = q - (j == t ? 1.0 : 0.0);
      row.grad_term[j] = ce_k * row.ds[j] + row.s * dce;
    }
    row.grad_term[k] = ce_k * row.ds[k];
  } else {
    row.floored = true;
    const double log_pt = z[t] - lse_all;
    const double inner = std::log(kAbstainFloor) - log_pt;
    row.term = row.s * inner;
    for (std::size_t j = 0; j <= k; ++j) {
      const double dneg_log_pt = row.p[j] - (j == t ? 1.0 : 0.0);
      row.grad_term[j] = inner * row.ds[j] + row.s * dneg_log_pt;
    }
  }
  return row;
}

}  // namespace

double abstain_rate_argmax(const Matrix& probs) {
  if (probs.rows() == 0 || probs.cols() < 2) return 0.0;
  const std::size_t k = probs.cols() - 1;
  std::size_t abstained = 0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto row = probs.row(r);
    const bool strictly_max = std::all_of(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k),
                                          [&](double v) { return row[k] > v; });
    if (strictly_max) ++abstained;
  }
  return static_cast<double>(abstained) / static_cast<double>(probs.rows());
}

BatchLossResult ce_loss(const Matrix& logits, std::span<const int> targets) {
  check_batch(logits, targets, logits.cols());
  const std::size_t n = logits.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  BatchLossResult out;
  out.grad_logits = Matrix(n, logits.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto z = logits.row(r);
    const auto p = softmax_stable(z);
    const auto t = static_cast<std::size_t>(targets[r]);
    total += log_sum_exp(z) - z[t];
    auto g = out.grad_logits.row(r);
    for (std::size_t j = 0; j < p.size(); ++j) g[j] = (p[j] - (j == t ? 1.0 : 0.0)) * inv_n;
  }
  out.loss = total * inv_n;
  return out;
}

SceTerms sce_terms(const Matrix& logits, std::span<const int> targets, double log_clip) {
  if (!(log_clip < 0.0)) fail(ErrorKind::InvalidConfig, "sce_log_clip must be negative");
  SceTerms terms{ce_loss(logits, targets), {}};
  const std::size_t n = logits.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double weight = -log_clip;
  auto& rce = terms.rce;
  rce.grad_logits = Matrix(n, logits.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto p = softmax_stable(logits.row(r));
    const auto t = static_cast<std::size_t>(targets[r]);
    // -sum_i p_i log t_i: only the non-target slots contribute, each with log 0 -> log_clip.
    total += weight * (1.0 - p[t]);
    auto g = rce.grad_logits.row(r);
    for (std::size_t j = 0; j < p.size(); ++j) g[j] = -weight * p[t] * ((j == t ? 1.0 : 0.0) - p[j]) * inv_n;
  }
  rce.loss = total * inv_n;
  return terms;
}

BatchLossResult sce_loss(const Matrix& logits, std::span<const int> targets, const LossSpec& spec) {
  auto [ce, rce] = sce_terms(logits, targets, spec.sce_log_clip);
  BatchLossResult out;
  out.loss = ce.loss + rce.loss;
  out.grad_logits = std::move(ce.grad_logits);
  auto g = out.grad_logits.values();
  const auto gr = rce.grad_logits.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += gr[i];
  return out;
}

BatchLossResult dac_loss(const Matrix& logits, std::span<const int> targets, double alpha_current) {
  check_abstain_batch(logits, targets);
  if (!(alpha_current >= 0.0)) fail(ErrorKind::InvalidConfig, "alpha must be >= 0");
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols() - 1;
  const double inv_n = 1.0 / static_cast<double>(n);
  BatchLossResult out;
  out.grad_logits = Matrix(n, k + 1);
  Matrix probs(n, k + 1);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = abstain_row(logits.row(r), targets[r]);
    std::copy(row.p.begin(), row.p.end(), probs.row(r).begin());
    auto g = out.grad_logits.row(r);
    if (!row.floored) {
      // alpha * log(1 / s) = -alpha * log s
      total += row.term - alpha_current * row.log_s;
      for (std::size_t j = 0; j <= k; ++j) g[j] = (row.grad_term[j] - alpha_current * row.ds[j] / row.s) * inv_n;
    } else {
      total += row.term - alpha_current * std::log(kAbstainFloor);
      for (std::size_t j = 0; j <= k; ++j) g[j] = row.grad_term[j] * inv_n;
    }
  }
  out.loss = total * inv_n;
  out.eta_hat = mean_abstain_prob(probs);
  out.abstain_rate_argmax = abstain_rate_argmax(probs);
  return out;
}

BatchLossResult idac_loss(const Matrix& logits, std::span<const int> targets, const LossSpec& spec) {
  if (spec.kind != LossKind::IDAC) fail(ErrorKind::InvalidConfig, "idac_loss called with a non-IDAC spec");
  spec.validate();
  check_abstain_batch(logits, targets);
  const double alpha = *spec.alpha;
  const double eta_tilde = *spec.eta_tilde;
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols() - 1;
  const double inv_n = 1.0 / static_cast<double>(n);

  BatchLossResult out;
  out.grad_logits = Matrix(n, k + 1);
  Matrix probs(n, k + 1);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = abstain_row(logits.row(r), targets[r]);
    std::copy(row.p.begin(), row.p.end(), probs.row(r).begin());
    total += row.term;
    auto g = out.grad_logits.row(r);
    for (std::size_t j = 0; j <= k; ++j) g[j] = row.grad_term[j] * inv_n;
  }
  const double eta_hat = mean_abstain_prob(probs);
  const double gap = eta_tilde - eta_hat;
  out.loss = total * inv_n + alpha * gap * gap;

  // d/dz_{l,j} of alpha (eta_tilde - eta_hat)^2 = 2 alpha (eta_hat - eta_tilde) / N * d a_l / d z_{l,j}
  const double coupling = 2.0 * alpha * (eta_hat - eta_tilde) * inv_n;
  for (std::size_t r = 0; r < n; ++r) {
    const auto p = probs.row(r);
    const double a = p[k];
    const double s = std::exp(log_sum_exp(logits.row(r).first(k)) - log_sum_exp(logits.row(r)));
    auto g = out.grad_logits.row(r);
    for (std::size_t j = 0; j < k; ++j) g[j] += coupling * (-a * p[j]);
    g[k] += coupling * a * s;
  }
  out.eta_hat = eta_hat;
  out.abstain_rate_argmax = abstain_rate_argmax(probs);
  return out;
}

BatchLossResult nce_loss(const Matrix& logits, std::span<const int> targets) {
  check_batch(logits, targets, logits.cols());
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  BatchLossResult out;
  out.grad_logits = Matrix(n, k);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto z = logits.row(r);
    const auto p = softmax_stable(z);
    const double lse = log_sum_exp(z);
    const auto t = static_cast<std::size_t>(targets[r]);
    double zsum = 0.0;
    for (double v : z) zsum += v;
    const double num = lse - z[t];
    const double den = static_cast<double>(k) * lse - zsum;
    if (std::abs(den) < kDegenerateDenominator) fail(ErrorKind::NumericDegeneracy, "NCE denominator vanished");
    total += num / den;
    auto g = out.grad_logits.row(r);
    for (std::size_t j = 0; j < k; ++j) {
      const double dnum = p[j] - (j == t ? 1.0 : 0.0);
      const double dden = static_cast<double>(k) * p[j] - 1.0;
      g[j] = (dnum * den - num * dden) / (den * den) * inv_n;
    }
  }
  out.loss = total * inv_n;
  return out;
}

BatchLossResult ngce_loss(const Matrix& logits, std::span<const int> targets, const LossSpec& spec) {
  if (!spec.q || !(*spec.q > 0.0)) fail(ErrorKind::InvalidConfig, "NGCE requires q > 0");
  check_batch(logits, targets, logits.cols());
  const double q = *spec.q;
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  BatchLossResult out;
  out.grad_logits = Matrix(n, k);
  double total = 0.0;
  std::vector<double> pq(k);
  for (std::size_t r = 0; r < n; ++r) {
    const auto p = softmax_stable(logits.row(r));
    const auto t = static_cast<std::size_t>(targets[r]);
    double sum_pq = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      pq[j] = std::pow(p[j], q);
      sum_pq += pq[j];
    }
    const double num = 1.0 - pq[t];
    const double den = static_cast<double>(k) - sum_pq;
    if (std::abs(den) < kDegenerateDenominator) fail(ErrorKind::NumericDegeneracy, "NGCE denominator vanished");
    total += num / den;
    auto g = out.grad_logits.row(r);
    for (std::size_t j = 0; j < k; ++j) {
      const double dnum = -q * pq[t] * ((j == t ? 1.0 : 0.0) - p[j]);
      const double dden = -q * (pq[j] - p[j] * sum_pq);
      g[j] = (dnum * den - num * dden) / (den * den) * inv_n;
    }
  }
  out.loss = total * inv_n;
  return out;
}

BatchLossResult agce_loss(const Matrix& logits, std::span<const int> targets, const LossSpec& spec) {
  if (!spec.q || !(*spec.q > 0.0)) fail(ErrorKind::InvalidConfig, "AGCE requires q > 0");
  if (!spec.a || !(*spec.a > 0.0)) fail(ErrorKind::InvalidConfig, "AGCE requires a > 0");
  check_batch(logits, targets, logits.cols());
  const double q = *spec.q;
  const double a = *spec.a;
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double top = std::pow(a + 1.0, q);
  BatchLossResult out;
  out.grad_logits = Matrix(n, k);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto p = softmax_stable(logits.row(r));
    const auto t = static_cast<std::size_t>(targets[r]);
    total += (top - std::pow(a + p[t], q)) / q;
    const double scale = -std::pow(a + p[t], q - 1.0) * p[t];
    auto g = out.grad_logits.row(r);
    for (std::size_t j = 0; j < k; ++j) g[j] = scale * ((j == t ? 1.0 : 0.0) - p[j]) * inv_n;
  }
  out.loss = total * inv_n;
  return out;
}

BatchLossResult warmup_ce_loss(const Matrix& logits, std::span<const int> targets) {
  check_abstain_batch(logits, targets);
  auto out = ce_loss(logits, targets);
  const Matrix probs = softmax_rows(logits);
  out.eta_hat = mean_abstain_prob(probs);
  out.abstain_rate_argmax = abstain_rate_argmax(probs);
  return out;
}

double dac_alpha_at(int epoch, const DacSchedule& schedule) {
  if (epoch < schedule.warmup_epochs) return 0.0;
  const int span = schedule.total_epochs - 1 - schedule.warmup_epochs;
  if (span <= 0) return schedule.alpha_final;
  const double frac = std::min(1.0, static_cast<double>(epoch - schedule.warmup_epochs) / static_cast<double>(span));
  return schedule.alpha_final * frac;
}

BatchLossResult compute_loss(const LossSpec& spec, const Matrix& logits, std::span<const int> targets,
                             double alpha_current) {
  switch (spec.kind) {
    case LossKind::CE: return ce_loss(logits, targets);
    case LossKind::SCE: return sce_loss(logits, targets, spec);
    case LossKind::DAC: return dac_loss(logits, targets, alpha_current);
    case LossKind::IDAC: return idac_loss(logits, targets, spec);
    case LossKind::NCE: return nce_loss(logits, targets);
    case LossKind::NGCE: return ngce_loss(logits, targets, spec);
    case LossKind::AGCE: return agce_loss(logits, targets, spec);
  }
  fail(ErrorKind::InvalidConfig, "unhandled loss kind");
}

Matrix inference_probs(const Matrix& logits, std::size_t num_classes) {
  if (logits.cols() == num_classes) return softmax_rows(logits);
  if (logits.cols() != num_classes + 1) {
    fail(ErrorKind::Shape, fmt::format("{} logit columns for {} classes", logits.cols(), num_classes));
  }
  Matrix out(logits.rows(), num_classes);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto p = softmax_stable(logits.row(r).first(num_classes));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace idac
