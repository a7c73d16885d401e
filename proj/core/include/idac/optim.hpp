#pragma once

#include <vector>

#include "idac/model.hpp"

namespace idac {

/// SGD with coupled weight decay and a milestone learning-rate schedule.
/// Defaults follow the classic recipe: lr 0.1, momentum 0.9, decay 5e-4,
/// x0.1 at epochs 100 and 250.
struct OptimConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> milestones{100, 250};
  double gamma = 0.1;

  void validate() const;
};

/// lr0 * gamma^(number of milestones <= epoch)
double lr_at(int epoch, const OptimConfig& config);

/// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
/// Applied uniformly to weights and biases. Throws TrainingDiverged on a
/// non-finite gradient (state is left untouched in that case).
void sgd_step(MlpState& state, const MlpGradients& grads, double lr, const OptimConfig& config);

}  // namespace idac
