#include "idac/optim.hpp"

#include <cmath>

#include "idac/error.hpp"

namespace idac {

void OptimConfig::validate() const {
  if (!(lr0 > 0.0)) fail(ErrorKind::InvalidConfig, "lr0 must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorKind::InvalidConfig, "momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) fail(ErrorKind::InvalidConfig, "weight_decay must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail(ErrorKind::InvalidConfig, "gamma must lie in (0, 1]");
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) fail(ErrorKind::InvalidConfig, "milestones must be strictly increasing");
  }
}

double lr_at(int epoch, const OptimConfig& config) {
  double lr = config.lr0;
  for (int m : config.milestones) {
    if (m <= epoch) lr *= config.gamma;
  }
  return lr;
}

namespace {

void update(Matrix& param, Matrix& velocity, const Matrix& grad, double lr, const OptimConfig& config) {
  auto p = param.values();
  auto v = velocity.values();
  const auto g = grad.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = config.momentum * v[i] + g[i] + config.weight_decay * p[i];
    p[i] -= lr * v[i];
  }
}

}  // namespace

void sgd_step(MlpState& state, const MlpGradients& grads, double lr, const OptimConfig& config) {
  if (grads.size() != state.layers.size()) fail(ErrorKind::Shape, "gradient list does not match the model depth");
  for (std::size_t l = 0; l < grads.size(); ++l) {
    const auto& layer = state.layers[l];
    if (grads[l].weights.rows() != layer.weights.rows() || grads[l].weights.cols() != layer.weights.cols() ||
        grads[l].bias.cols() != layer.bias.cols() || grads[l].bias.rows() != layer.bias.rows()) {
      fail(ErrorKind::Shape, "gradient shape does not match parameters");
    }
    if (!grads[l].weights.all_finite() || !grads[l].bias.all_finite()) {
      fail(ErrorKind::TrainingDiverged, "non-finite gradient");
    }
  }
  for (std::size_t l = 0; l < grads.size(); ++l) {
    auto& layer = state.layers[l];
    update(layer.weights, layer.weights_velocity, grads[l].weights, lr, config);
    update(layer.bias, layer.bias_velocity, grads[l].bias, lr, config);
  }
}

}  // namespace idac
