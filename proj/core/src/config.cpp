#include "idac/config.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "idac/error.hpp"

namespace idac {

double resolve_eta_tilde(const EtaTildePolicy& policy, double injected_rate) {
  double value = 0.0;
  if (std::holds_alternative<std::monostate>(policy)) {
    fail(ErrorKind::InvalidConfig, "eta_tilde policy is unresolved (set loss.eta_tilde or eta_tilde_policy)");
  } else if (const auto* e = std::get_if<EtaExplicit>(&policy)) {
    value = e->value;
  } else if (std::holds_alternative<EtaUseInjectedRate>(policy)) {
    value = injected_rate;
  } else {
    value = std::max(injected_rate, std::get<EtaFloor>(policy).floor);
  }
  if (!(value >= 0.0 && value <= 1.0)) fail(ErrorKind::InvalidConfig, fmt::format("eta_tilde {} outside [0, 1]", value));
  return value;
}

void TrainConfig::validate() const {
  if (total_epochs < 1) fail(ErrorKind::InvalidConfig, "total_epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= total_epochs) {
    fail(ErrorKind::InvalidConfig, "warmup_epochs must lie in [0, total_epochs)");
  }
  if (batch_size < 1) fail(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (model.abstain_head != has_abstention(loss.kind)) {
    fail(ErrorKind::InvalidConfig, "model.abstain_head must be true exactly for DAC and IDAC");
  }
  if (noise && !(noise->rate >= 0.0 && noise->rate <= 1.0)) fail(ErrorKind::InvalidConfig, "noise.rate outside [0, 1]");
  if (!(eval.threshold >= 0.0 && eval.threshold <= 1.0)) fail(ErrorKind::InvalidConfig, "eval.threshold outside [0, 1]");
  if (eval.n_bootstrap < 1) fail(ErrorKind::InvalidConfig, "eval.n_bootstrap must be >= 1");
  optim.validate();
  // IDAC's eta_tilde may still be pending resolution here; everything else must be complete.
  LossSpec probe = loss;
  if (probe.kind == LossKind::IDAC && !probe.eta_tilde) probe.eta_tilde = 0.0;
  probe.validate();
}

// ---------------------------------------------------------------------------
// JSON

namespace {

void reject_unknown(const nlohmann::json& j, std::string_view where, std::initializer_list<std::string_view> known) {
  if (!j.is_object()) fail(ErrorKind::Schema, fmt::format("'{}' must be an object", where));
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      fail(ErrorKind::Schema, fmt::format("unknown key '{}{}{}'", where, where.empty() ? "" : ".", item.key()));
    }
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, std::string_view where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Schema, fmt::format("'{}{}{}' has the wrong type", where, where.empty() ? "" : ".", key));
  }
}

template <typename T>
void read_optional(const nlohmann::json& j, const char* key, std::optional<T>& out, std::string_view where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T value{};
  read(j, key, value, where);
  out = value;
}

LossSpec loss_from_json(const nlohmann::json& j) {
  reject_unknown(j, "loss", {"kind", "alpha", "eta_tilde", "sce_log_clip", "q", "a"});
  LossSpec spec;
  std::string kind = "CE";
  read(j, "kind", kind, "loss");
  spec.kind = parse_loss_kind(kind);
  read_optional(j, "alpha", spec.alpha, "loss");
  read_optional(j, "eta_tilde", spec.eta_tilde, "loss");
  read(j, "sce_log_clip", spec.sce_log_clip, "loss");
  read_optional(j, "q", spec.q, "loss");
  read_optional(j, "a", spec.a, "loss");
  return spec;
}

EtaTildePolicy policy_from_json(const nlohmann::json& j, double floor) {
  if (j.is_null()) return std::monostate{};
  if (j.is_number()) return EtaExplicit{j.get<double>()};
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "use-injected-rate") return EtaUseInjectedRate{};
    if (s == "floor") return EtaFloor{floor};
  }
  fail(ErrorKind::Schema, "eta_tilde_policy must be a number, \"use-injected-rate\" or \"floor\"");
}

template <typename T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const LossSpec& spec) {
  return {{"kind", std::string(to_string(spec.kind))}, {"alpha", optional_json(spec.alpha)},
          {"eta_tilde", optional_json(spec.eta_tilde)}, {"sce_log_clip", spec.sce_log_clip},
          {"q", optional_json(spec.q)}, {"a", optional_json(spec.a)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  reject_unknown(j, "",
                 {"loss", "model", "optim", "total_epochs", "warmup_epochs", "batch_size", "seed", "noise",
                  "eta_tilde_policy", "eta_tilde_floor", "eval"});
  TrainConfig c;
  if (j.contains("loss")) c.loss = loss_from_json(j.at("loss"));

  c.model.abstain_head = has_abstention(c.loss.kind);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, "model", {"input_dim", "hidden_dims", "num_classes", "abstain_head"});
    read(m, "input_dim", c.model.input_dim, "model");
    read(m, "hidden_dims", c.model.hidden_dims, "model");
    read(m, "num_classes", c.model.num_classes, "model");
    read(m, "abstain_head", c.model.abstain_head, "model");
  }
  if (j.contains("optim")) {
    const auto& o = j.at("optim");
    reject_unknown(o, "optim", {"lr0", "momentum", "weight_decay", "milestones", "gamma"});
    read(o, "lr0", c.optim.lr0, "optim");
    read(o, "momentum", c.optim.momentum, "optim");
    read(o, "weight_decay", c.optim.weight_decay, "optim");
    read(o, "milestones", c.optim.milestones, "optim");
    read(o, "gamma", c.optim.gamma, "optim");
  }
  read(j, "total_epochs", c.total_epochs, "");
  read(j, "warmup_epochs", c.warmup_epochs, "");
  read(j, "batch_size", c.batch_size, "");
  read(j, "seed", c.seed, "");
  if (j.contains("noise") && !j.at("noise").is_null()) {
    const auto& n = j.at("noise");
    reject_unknown(n, "noise", {"rate", "seed"});
    NoiseConfig noise;
    noise.seed = c.seed;
    read(n, "rate", noise.rate, "noise");
    read(n, "seed", noise.seed, "noise");
    c.noise = noise;
  }
  double floor = 0.005;
  read(j, "eta_tilde_floor", floor, "");
  if (j.contains("eta_tilde_policy")) {
    c.eta_tilde_policy = policy_from_json(j.at("eta_tilde_policy"), floor);
  } else if (c.loss.eta_tilde) {
    c.eta_tilde_policy = EtaExplicit{*c.loss.eta_tilde};
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown(e, "eval", {"threshold", "n_bootstrap"});
    read(e, "threshold", c.eval.threshold, "eval");
    read(e, "n_bootstrap", c.eval.n_bootstrap, "eval");
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json policy = nullptr;
  double floor = 0.005;
  if (const auto* e = std::get_if<EtaExplicit>(&c.eta_tilde_policy)) {
    policy = e->value;
  } else if (std::holds_alternative<EtaUseInjectedRate>(c.eta_tilde_policy)) {
    policy = "use-injected-rate";
  } else if (const auto* f = std::get_if<EtaFloor>(&c.eta_tilde_policy)) {
    policy = "floor";
    floor = f->floor;
  }
  // abstain_head is derived from the loss kind, so it is left out of the snapshot.
  return {{"loss", to_json(c.loss)},
          {"model",
           {{"input_dim", c.model.input_dim}, {"hidden_dims", c.model.hidden_dims}, {"num_classes", c.model.num_classes}}},
          {"optim",
           {{"lr0", c.optim.lr0},
            {"momentum", c.optim.momentum},
            {"weight_decay", c.optim.weight_decay},
            {"milestones", c.optim.milestones},
            {"gamma", c.optim.gamma}}},
          {"total_epochs", c.total_epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"noise", c.noise ? nlohmann::json{{"rate", c.noise->rate}, {"seed", c.noise->seed}} : nlohmann::json(nullptr)},
          {"eta_tilde_policy", policy},
          {"eta_tilde_floor", floor},
          {"eval", {{"threshold", c.eval.threshold}, {"n_bootstrap", c.eval.n_bootstrap}}}};
}

nlohmann::json parse_override_value(std::string_view raw) {
  auto parsed = nlohmann::json::parse(raw.begin(), raw.end(), nullptr, false);
  if (parsed.is_discarded()) return std::string(raw);
  return parsed;
}

void apply_override(nlohmann::json& j, std::string_view dotted_key, const nlohmann::json& value) {
  if (dotted_key.empty()) fail(ErrorKind::Schema, "empty override key");
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_key.find('.', start);
    const std::string part(dotted_key.substr(start, dot - start));
    if (part.empty()) fail(ErrorKind::Schema, fmt::format("malformed override key '{}'", dotted_key));
    if (node->is_null()) *node = nlohmann::json::object();
    if (!node->is_object()) fail(ErrorKind::Schema, fmt::format("override '{}' descends into a non-object", dotted_key));
    if (dot == std::string_view::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

void apply_override(nlohmann::json& j, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    fail(ErrorKind::Schema, fmt::format("override '{}' is not of the form key=value", assignment));
  }
  apply_override(j, assignment.substr(0, eq), parse_override_value(assignment.substr(eq + 1)));
}

}  // namespace idac
