#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "idac/losses.hpp"
#include "idac/model.hpp"
#include "idac/optim.hpp"

namespace idac {

struct NoiseConfig {
  double rate = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

/// How IDAC's noise estimate is chosen before training.
struct EtaExplicit {
  double value = 0.0;
  friend bool operator==(const EtaExplicit&, const EtaExplicit&) = default;
};
struct EtaUseInjectedRate {
  friend bool operator==(const EtaUseInjectedRate&, const EtaUseInjectedRate&) = default;
};
/// max(injected rate, floor); covers the "0% simulated noise" case.
struct EtaFloor {
  double floor = 0.005;
  friend bool operator==(const EtaFloor&, const EtaFloor&) = default;
};
using EtaTildePolicy = std::variant<std::monostate, EtaExplicit, EtaUseInjectedRate, EtaFloor>;

/// Throws InvalidConfig for an unresolved (monostate) policy or an out-of-range result.
double resolve_eta_tilde(const EtaTildePolicy& policy, double injected_rate);

struct EvalConfig {
  double threshold = 0.5;
  std::size_t n_bootstrap = 1000;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct TrainConfig {
  LossSpec loss;
  /// input_dim and num_classes of 0 are taken from the dataset; abstain_head follows the loss.
  MlpSpec model{0, {}, 0, false};
  OptimConfig optim;
  int total_epochs = 300;
  int warmup_epochs = 0;
  std::size_t batch_size = 512;
  std::uint64_t seed = 0;
  std::optional<NoiseConfig> noise;
  EtaTildePolicy eta_tilde_policy;
  EvalConfig eval;

  /// Structural checks that do not need the dataset.
  void validate() const;
};

/// Strict parse: unknown keys and wrong types are Schema errors.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const LossSpec& spec);

/// Sets `dotted.key` in j. `raw` is parsed as JSON when it is valid JSON,
/// otherwise taken as a string. Missing intermediate objects are created;
/// descending into a non-object value is a Schema error.
void apply_override(nlohmann::json& j, std::string_view dotted_key, const nlohmann::json& value);
void apply_override(nlohmann::json& j, std::string_view assignment);

nlohmann::json parse_override_value(std::string_view raw);

}  // namespace idac
