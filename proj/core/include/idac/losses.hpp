#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "idac/numerics.hpp"

namespace idac {

enum class LossKind { CE, SCE, DAC, IDAC, NCE, NGCE, AGCE };

std::string_view to_string(LossKind kind);
/// Accepts the canonical upper-case names, case-insensitively. Throws InvalidConfig.
LossKind parse_loss_kind(std::string_view name);
/// DAC and IDAC carry the extra abstention output.
bool has_abstention(LossKind kind) noexcept;

/// Loss selection plus its hyperparameters. Fields that a kind does not use
/// are ignored; fields a kind requires must be present (see validate()).
struct LossSpec {
  LossKind kind = LossKind::CE;
  /// DAC: final ramp weight. IDAC: constant regularizer weight.
  std::optional<double> alpha;
  /// IDAC noise estimate, in [0, 1].
  std::optional<double> eta_tilde;
  /// Value substituted for log(0) in the reverse cross entropy term.
  double sce_log_clip = -4.0;
  std::optional<double> q;
  std::optional<double> a;

  /// Throws InvalidConfig when a required field is missing or out of range.
  void validate() const;
};

/// Floor applied to 1 - p_abstain inside logs and divisions.
inline constexpr double kAbstainFloor = 1e-7;
/// Denominators of the normalized losses below this magnitude are rejected.
inline constexpr double kDegenerateDenominator = 1e-12;

struct BatchLossResult {
  double loss = 0.0;
  Matrix grad_logits;
  /// Soft abstention estimate: batch mean of the abstention probability.
  std::optional<double> eta_hat;
  /// Fraction of rows whose abstention probability strictly exceeds every class probability.
  double abstain_rate_argmax = 0.0;
};

BatchLossResult ce_loss(const Matrix& logits, std::span<const int> targets);

struct SceTerms {
  BatchLossResult ce;
  BatchLossResult rce;
};
/// The two halves of SCE; `ce` is computed by ce_loss itself.
SceTerms sce_terms(const Matrix& logits, std::span<const int> targets, double log_clip);
BatchLossResult sce_loss(const Matrix& logits, std::span<const int> targets, const LossSpec& spec);

/// logits are N×(k+1); the last column is the abstention output.
BatchLossResult dac_loss(const Matrix& logits, std::span<const int> targets, double alpha_current);
BatchLossResult idac_loss(const Matrix& logits, std::span<const int> targets, const LossSpec& spec);

BatchLossResult nce_loss(const Matrix& logits, std::span<const int> targets);
BatchLossResult ngce_loss(const Matrix& logits, std::span<const int> targets, const LossSpec& spec);
BatchLossResult agce_loss(const Matrix& logits, std::span<const int> targets, const LossSpec& spec);

/// Plain CE over all k+1 outputs; the abstention column is never a target.
BatchLossResult warmup_ce_loss(const Matrix& logits, std::span<const int> targets);

struct DacSchedule {
  int warmup_epochs = 0;
  int total_epochs = 1;
  double alpha_final = 1.0;
};

/// 0 during warm-up, then linear from 0 at epoch == warmup_epochs to
/// alpha_final at epoch == total_epochs - 1 (held there afterwards).
double dac_alpha_at(int epoch, const DacSchedule& schedule);

/// Dispatches on spec.kind. `alpha_current` is only read for DAC, where the
/// caller supplies the scheduled value.
BatchLossResult compute_loss(const LossSpec& spec, const Matrix& logits, std::span<const int> targets,
                             double alpha_current = 0.0);

/// Drops the abstention column when logits has num_classes + 1 columns, then
/// softmaxes each row over the num_classes class logits.
Matrix inference_probs(const Matrix& logits, std::size_t num_classes);

/// Fraction of rows whose last-column probability is strictly the largest.
double abstain_rate_argmax(const Matrix& probs);

}  // namespace idac
