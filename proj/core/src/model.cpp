#include "idac/model.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "idac/error.hpp"

namespace idac {

namespace {

constexpr std::string_view kCheckpointMagic = "IDACCKP1";

std::vector<std::size_t> layer_widths(const MlpSpec& spec) {
  std::vector<std::size_t> widths{spec.input_dim};
  widths.insert(widths.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
  widths.push_back(spec.output_dim());
  return widths;
}

}  // namespace

void MlpSpec::validate() const {
  if (input_dim < 1) fail(ErrorKind::InvalidConfig, "input_dim must be >= 1");
  if (num_classes < 2) fail(ErrorKind::InvalidConfig, "num_classes must be >= 2");
  for (std::size_t h : hidden_dims) {
    if (h < 1) fail(ErrorKind::InvalidConfig, "hidden layer widths must be >= 1");
  }
}

std::size_t MlpState::parameter_count() const {
  std::size_t total = 0;
  for (const auto& layer : layers) total += layer.weights.size() + layer.bias.size();
  return total;
}

bool MlpState::all_finite() const {
  for (const auto& layer : layers) {
    if (!layer.weights.all_finite() || !layer.bias.all_finite()) return false;
  }
  return true;
}

MlpState init_mlp(const MlpSpec& spec, Rng rng) {
  spec.validate();
  MlpState state;
  state.spec = spec;
  const auto widths = layer_widths(spec);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    DenseLayer layer{Matrix(fan_in, fan_out), Matrix(1, fan_out), Matrix(fan_in, fan_out), Matrix(1, fan_out)};
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& w : layer.weights.values()) w = stddev * rng.normal();
    state.layers.push_back(std::move(layer));
  }
  return state;
}

ForwardResult forward(const MlpState& state, const Matrix& batch) {
  if (state.layers.empty()) fail(ErrorKind::Shape, "model has no layers");
  if (batch.cols() != state.layers.front().weights.rows()) {
    fail(ErrorKind::Shape, fmt::format("batch has {} features, model expects {}", batch.cols(),
                                       state.layers.front().weights.rows()));
  }
  ForwardResult result;
  Matrix activation = batch;
  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    const auto& layer = state.layers[l];
    Matrix pre = add_bias(matmul(activation, layer.weights), layer.bias);
    result.cache.inputs.push_back(std::move(activation));
    if (l + 1 < state.layers.size()) {
      activation = relu(pre);
      result.cache.pre_activations.push_back(std::move(pre));
    } else {
      result.logits = pre;
      result.cache.pre_activations.push_back(std::move(pre));
    }
  }
  return result;
}

Matrix predict_logits(const MlpState& state, const Matrix& batch) {
  if (state.layers.empty()) fail(ErrorKind::Shape, "model has no layers");
  if (batch.cols() != state.layers.front().weights.rows()) {
    fail(ErrorKind::Shape, fmt::format("batch has {} features, model expects {}", batch.cols(),
                                       state.layers.front().weights.rows()));
  }
  Matrix activation = batch;
  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    Matrix pre = add_bias(matmul(activation, state.layers[l].weights), state.layers[l].bias);
    activation = l + 1 < state.layers.size() ? relu(pre) : std::move(pre);
  }
  return activation;
}

MlpGradients backward(const MlpState& state, const ForwardCache& cache, const Matrix& grad_logits) {
  const std::size_t depth = state.layers.size();
  if (cache.inputs.size() != depth || cache.pre_activations.size() != depth) {
    fail(ErrorKind::Shape, "forward cache does not match the model depth");
  }
  for (std::size_t l = 0; l < depth; ++l) {
    if (cache.inputs[l].cols() != state.layers[l].weights.rows() ||
        cache.pre_activations[l].cols() != state.layers[l].weights.cols() ||
        cache.inputs[l].rows() != grad_logits.rows()) {
      fail(ErrorKind::Shape, fmt::format("stale forward cache at layer {}", l));
    }
  }
  if (grad_logits.cols() != state.layers.back().weights.cols()) {
    fail(ErrorKind::Shape, "grad_logits width does not match the output layer");
  }

  MlpGradients grads(depth);
  Matrix upstream = grad_logits;
  for (std::size_t l = depth; l-- > 0;) {
    grads[l].weights = matmul_tn(cache.inputs[l], upstream);
    grads[l].bias = column_sums(upstream);
    if (l > 0) upstream = relu_backward(matmul_nt(upstream, state.layers[l].weights), cache.pre_activations[l - 1]);
  }
  return grads;
}

std::vector<double> flatten_parameters(const MlpState& state) {
  std::vector<double> flat;
  flat.reserve(state.parameter_count());
  for (const auto& layer : state.layers) {
    flat.insert(flat.end(), layer.weights.values().begin(), layer.weights.values().end());
    flat.insert(flat.end(), layer.bias.values().begin(), layer.bias.values().end());
  }
  return flat;
}

void assign_parameters(MlpState& state, std::span<const double> flat) {
  if (flat.size() != state.parameter_count()) fail(ErrorKind::Shape, "flat parameter vector has the wrong length");
  std::size_t offset = 0;
  for (auto& layer : state.layers) {
    for (double& w : layer.weights.values()) w = flat[offset++];
    for (double& b : layer.bias.values()) b = flat[offset++];
  }
}

std::vector<double> flatten_gradients(const MlpGradients& grads) {
  std::vector<double> flat;
  for (const auto& g : grads) {
    flat.insert(flat.end(), g.weights.values().begin(), g.weights.values().end());
    flat.insert(flat.end(), g.bias.values().begin(), g.bias.values().end());
  }
  return flat;
}

nlohmann::json to_json(const MlpSpec& spec) {
  return {{"input_dim", spec.input_dim},
          {"hidden_dims", spec.hidden_dims},
          {"num_classes", spec.num_classes},
          {"abstain_head", spec.abstain_head}};
}

MlpSpec mlp_spec_from_json(const nlohmann::json& j) {
  MlpSpec spec;
  try {
    spec.input_dim = j.at("input_dim").get<std::size_t>();
    spec.hidden_dims = j.value("hidden_dims", std::vector<std::size_t>{});
    spec.num_classes = j.at("num_classes").get<std::size_t>();
    spec.abstain_head = j.value("abstain_head", false);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Schema, fmt::format("model spec: {}", e.what()));
  }
  spec.validate();
  return spec;
}

void save_checkpoint(const std::filesystem::path& path, const MlpState& state, const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, fmt::format("cannot write checkpoint '{}'", path.string()));
  const nlohmann::json header = {{"format", "idac-checkpoint"},
                                 {"version", 1},
                                 {"spec", to_json(state.spec)},
                                 {"seed", meta.seed},
                                 {"epoch", meta.epoch},
                                 {"parameter_count", state.parameter_count()},
                                 {"extra", meta.extra}};
  detail::write_header(out, kCheckpointMagic, header.dump());
  detail::write_doubles(out, flatten_parameters(state));
  std::vector<double> momentum;
  momentum.reserve(state.parameter_count());
  for (const auto& layer : state.layers) {
    momentum.insert(momentum.end(), layer.weights_velocity.values().begin(), layer.weights_velocity.values().end());
    momentum.insert(momentum.end(), layer.bias_velocity.values().begin(), layer.bias_velocity.values().end());
  }
  detail::write_doubles(out, momentum);
  if (!out) fail(ErrorKind::Io, fmt::format("failed writing checkpoint '{}'", path.string()));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, fmt::format("cannot open checkpoint '{}'", path.string()));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(detail::read_header(in, kCheckpointMagic));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, fmt::format("checkpoint header: {}", e.what()));
  }
  LoadedCheckpoint loaded;
  loaded.state = init_mlp(mlp_spec_from_json(header.at("spec")), Rng(0));
  loaded.meta.seed = header.value("seed", std::uint64_t{0});
  loaded.meta.epoch = header.value("epoch", -1);
  loaded.meta.extra = header.value("extra", nlohmann::json::object());
  const std::size_t count = header.at("parameter_count").get<std::size_t>();
  if (count != loaded.state.parameter_count()) fail(ErrorKind::Parse, "checkpoint parameter count mismatch");

  std::vector<double> flat(count);
  detail::read_doubles(in, flat);
  assign_parameters(loaded.state, flat);
  detail::read_doubles(in, flat);
  std::size_t offset = 0;
  for (auto& layer : loaded.state.layers) {
    for (double& v : layer.weights_velocity.values()) v = flat[offset++];
    for (double& v : layer.bias_velocity.values()) v = flat[offset++];
  }
  return loaded;
}

}  // namespace idac
