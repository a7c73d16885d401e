#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "idac/numerics.hpp"

namespace idac {

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 2;
  bool abstain_head = false;

  std::size_t output_dim() const noexcept { return num_classes + (abstain_head ? 1 : 0); }
  /// Throws InvalidConfig on zero dims or fewer than two classes.
  void validate() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct DenseLayer {
  Matrix weights;  // fan_in × fan_out
  Matrix bias;     // 1 × fan_out
  Matrix weights_velocity;
  Matrix bias_velocity;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct MlpState {
  MlpSpec spec;
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const MlpState&, const MlpState&) = default;
};

struct LayerGradient {
  Matrix weights;
  Matrix bias;
};

using MlpGradients = std::vector<LayerGradient>;

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases, zero momentum.
MlpState init_mlp(const MlpSpec& spec, Rng rng);

struct ForwardCache {
  /// inputs[l] is the input to layer l (inputs[0] is the batch itself).
  std::vector<Matrix> inputs;
  /// pre_activations[l] is inputs[l] · W_l + b_l.
  std::vector<Matrix> pre_activations;
};

struct ForwardResult {
  Matrix logits;
  ForwardCache cache;
};

ForwardResult forward(const MlpState& state, const Matrix& batch);
/// Logits only; skips building the cache.
Matrix predict_logits(const MlpState& state, const Matrix& batch);
MlpGradients backward(const MlpState& state, const ForwardCache& cache, const Matrix& grad_logits);

/// Parameters flattened layer by layer as (weights row-major, bias).
std::vector<double> flatten_parameters(const MlpState& state);
void assign_parameters(MlpState& state, std::span<const double> flat);
std::vector<double> flatten_gradients(const MlpGradients& grads);

nlohmann::json to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const nlohmann::json& j);

/// Checkpoint header fields besides the model spec.
struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epoch = -1;
  /// Free-form extras (evaluation settings, loss kind, ...).
  nlohmann::json extra = nlohmann::json::object();
};

/// Layout: 8-byte magic "IDACCKP1", u64 LE header length, JSON header, then
/// parameter_count little-endian doubles of parameters followed by the same
/// count of momentum values.
void save_checkpoint(const std::filesystem::path& path, const MlpState& state, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  MlpState state;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace idac
