#include "idac/gradcheck.hpp"

#include <algorithm>

namespace idac {

std::size_t GradCheckReport::passed_count() const {
  return static_cast<std::size_t>(std::count_if(losses.begin(), losses.end(), [](const auto& l) { return l.passed; }));
}

GradCheckInstance random_instance(LossKind kind, std::size_t index, Rng& rng, double logit_scale) {
  constexpr std::size_t kBatch[] = {1, 8};
  constexpr std::size_t kClasses[] = {2, 5};
  const std::size_t n = kBatch[index % 2];
  const std::size_t k = kClasses[(index / 2) % 2];
  const std::size_t cols = has_abstention(kind) ? k + 1 : k;

  GradCheckInstance inst;
  inst.spec.kind = kind;
  inst.logits = Matrix(n, cols);
  for (double& v : inst.logits.values()) v = logit_scale * rng.normal();
  inst.targets.resize(n);
  for (int& t : inst.targets) t = static_cast<int>(rng.below(k));

  auto uniform_in = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  switch (kind) {
    case LossKind::SCE: inst.spec.sce_log_clip = uniform_in(-8.0, -1.0); break;
    case LossKind::DAC:
      inst.spec.alpha = uniform_in(0.0, 20.0);
      inst.alpha_current = uniform_in(0.0, *inst.spec.alpha);
      break;
    case LossKind::IDAC:
      inst.spec.alpha = uniform_in(0.0, 20.0);
      inst.spec.eta_tilde = uniform_in(0.0, 1.0);
      break;
    case LossKind::NGCE: inst.spec.q = uniform_in(0.25, 1.5); break;
    case LossKind::AGCE:
      inst.spec.q = uniform_in(0.25, 1.5);
      inst.spec.a = uniform_in(0.25, 1.5);
      break;
    default: break;
  }
  return inst;
}

double loss_gradient_error(const GradCheckInstance& instance, double step, double relative_floor) {
  const auto analytic = compute_loss(instance.spec, instance.logits, instance.targets, instance.alpha_current);
  const std::size_t rows = instance.logits.rows();
  const std::size_t cols = instance.logits.cols();
  auto value = [&](std::span<const double> x) {
    const Matrix z(rows, cols, std::vector<double>(x.begin(), x.end()));
    return compute_loss(instance.spec, z, instance.targets, instance.alpha_current).loss;
  };
  const auto numeric = finite_diff_grad(value, instance.logits.values(), step);
  return max_relative_error(analytic.grad_logits.values(), numeric, relative_floor);
}

GradCheckReport run_gradcheck_suite(const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;
  const Rng root(options.seed);
  for (LossKind kind : {LossKind::CE, LossKind::SCE, LossKind::DAC, LossKind::IDAC, LossKind::NCE, LossKind::NGCE,
                        LossKind::AGCE}) {
    Rng rng = root.substream(static_cast<std::uint64_t>(kind) + 1);
    LossGradCheck entry;
    entry.kind = kind;
    for (std::size_t i = 0; i < options.instances_per_loss; ++i) {
      const auto inst = random_instance(kind, i, rng, options.logit_scale);
      entry.max_rel_err = std::max(entry.max_rel_err, loss_gradient_error(inst, options.step, options.relative_floor));
      ++entry.instances;
    }
    entry.passed = entry.max_rel_err < options.tolerance;
    report.losses.push_back(entry);
  }
  return report;
}

}  // namespace idac
