#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "idac/losses.hpp"

namespace idac {

struct GradCheckOptions {
  std::size_t instances_per_loss = 50;
  std::uint64_t seed = 20240917;
  double step = 1e-5;
  double tolerance = 1e-5;
  /// Denominator floor of the relative error (see max_relative_error). Central
  /// differences carry ~eps*|L|/h ≈ 1e-11 rounding noise, so gradient entries
  /// smaller than the floor are effectively compared in absolute terms.
  double relative_floor = 1e-4;
  double logit_scale = 2.0;
};

struct LossGradCheck {
  LossKind kind = LossKind::CE;
  std::size_t instances = 0;
  double max_rel_err = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<LossGradCheck> losses;
  double tolerance = 0.0;

  std::size_t passed_count() const;
  bool all_passed() const { return passed_count() == losses.size(); }
};

/// Random (logits, targets, hyperparameters) instance for one loss kind.
/// Batch sizes cycle through {1, 8} and class counts through {2, 5}.
struct GradCheckInstance {
  LossSpec spec;
  Matrix logits;
  std::vector<int> targets;
  double alpha_current = 0.0;
};

GradCheckInstance random_instance(LossKind kind, std::size_t index, Rng& rng, double logit_scale = 2.0);

/// Analytic batch gradient against central finite differences of the loss value.
double loss_gradient_error(const GradCheckInstance& instance, double step, double relative_floor);

/// Runs every loss kind through the finite-difference comparison.
GradCheckReport run_gradcheck_suite(const GradCheckOptions& options = {});

}  // namespace idac
