#include <cmath>

#include <gtest/gtest.h>

#include "idac/error.hpp"
#include "idac/losses.hpp"
#include "idac/model.hpp"
#include "idac/optim.hpp"
#include "test_support.hpp"

using namespace idac;

namespace {

MlpState zero_state(const MlpSpec& spec) {
  MlpState s = init_mlp(spec, Rng(1));
  std::vector<double> zeros(s.parameter_count(), 0.0);
  assign_parameters(s, zeros);
  return s;
}

}  // namespace

TEST(MlpSpecTest, OutputWidthAndValidation) {
  EXPECT_EQ((MlpSpec{4, {8}, 2, false}).output_dim(), 2u);
  EXPECT_EQ((MlpSpec{4, {8}, 2, true}).output_dim(), 3u);
  EXPECT_THROW((MlpSpec{0, {}, 2, false}).validate(), Error);
  EXPECT_THROW((MlpSpec{3, {0}, 2, false}).validate(), Error);
  EXPECT_THROW((MlpSpec{3, {}, 1, false}).validate(), Error);
  EXPECT_NO_THROW((MlpSpec{3, {}, 2, true}).validate());
}

TEST(Init, SameSeedGivesIdenticalState) {
  const MlpSpec spec{5, {16, 8}, 3, true};
  const MlpState a = init_mlp(spec, Rng(99));
  const MlpState b = init_mlp(spec, Rng(99));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, init_mlp(spec, Rng(100)));
}

TEST(Init, NoHiddenLayersIsOneLinearMap) {
  const MlpState s = init_mlp(MlpSpec{6, {}, 2, true}, Rng(2));
  ASSERT_EQ(s.layers.size(), 1u);
  EXPECT_EQ(s.layers[0].weights.rows(), 6u);
  EXPECT_EQ(s.layers[0].weights.cols(), 3u);
  EXPECT_EQ(s.parameter_count(), 6u * 3u + 3u);
}

TEST(Init, HeVarianceAndZeroBiases) {
  const MlpState s = init_mlp(MlpSpec{256, {512}, 2, false}, Rng(3));
  const Matrix& w = s.layers[0].weights;
  double mean = 0.0, sq = 0.0;
  for (double v : w.values()) {
    mean += v;
    sq += v * v;
  }
  const double n = static_cast<double>(w.size());
  mean /= n;
  const double var = sq / n - mean * mean;
  EXPECT_NEAR(var, 2.0 / 256.0, 0.2 * 2.0 / 256.0);
  for (const auto& layer : s.layers) {
    for (double b : layer.bias.values()) EXPECT_EQ(b, 0.0);
    for (double v : layer.weights_velocity.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, ZeroWeightsGiveZeroLogits) {
  const MlpState s = zero_state(MlpSpec{3, {4}, 2, false});
  Rng rng(4);
  const auto out = forward(s, support::random_matrix(5, 3, rng));
  for (double v : out.logits.values()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, IdentityLayerReproducesInput) {
  MlpState s = init_mlp(MlpSpec{3, {}, 3, false}, Rng(5));
  s.layers[0].weights = Matrix::identity(3);
  Rng rng(6);
  const Matrix x = support::random_matrix(4, 3, rng);
  EXPECT_EQ(forward(s, x).logits, x);
  EXPECT_EQ(predict_logits(s, x), x);
}

TEST(Forward, HandComputedTwoTwoTwoNet) {
  MlpState s = init_mlp(MlpSpec{2, {2}, 2, false}, Rng(7));
  s.layers[0].weights = Matrix::from_rows({{1, -1}, {2, 0.5}});
  s.layers[0].bias = Matrix::from_rows({{0.5, -1}});
  s.layers[1].weights = Matrix::from_rows({{1, 2}, {3, 4}});
  s.layers[1].bias = Matrix::from_rows({{0.1, -0.2}});
  // hidden pre-activation [5.5, -1] -> relu [5.5, 0]
  const auto out = forward(s, Matrix::from_rows({{1, 2}}));
  EXPECT_DOUBLE_EQ(out.logits(0, 0), 5.6);
  EXPECT_DOUBLE_EQ(out.logits(0, 1), 10.8);
  EXPECT_EQ(out.cache.pre_activations[0], Matrix::from_rows({{5.5, -1}}));
}

TEST(Forward, ShapeMismatch) {
  const MlpState s = init_mlp(MlpSpec{3, {4}, 2, false}, Rng(8));
  EXPECT_THROW(forward(s, Matrix(2, 4)), Error);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const MlpState s = init_mlp(MlpSpec{3, {4, 4}, 2, true}, Rng(9));
  Rng rng(10);
  const auto fwd = forward(s, support::random_matrix(6, 3, rng));
  for (double g : flatten_gradients(backward(s, fwd.cache, Matrix(6, 3)))) EXPECT_EQ(g, 0.0);
}

TEST(Backward, LinearNetClosedForm) {
  const MlpState s = init_mlp(MlpSpec{3, {}, 2, false}, Rng(11));
  Rng rng(12);
  const Matrix x = support::random_matrix(5, 3, rng);
  const Matrix g = support::random_matrix(5, 2, rng);
  const auto grads = backward(s, forward(s, x).cache, g);
  EXPECT_EQ(grads[0].weights, matmul(transpose(x), g));
  EXPECT_EQ(grads[0].bias, column_sums(g));
}

TEST(Backward, StaleCacheIsShapeError) {
  const MlpState small = init_mlp(MlpSpec{3, {4}, 2, false}, Rng(13));
  const MlpState other = init_mlp(MlpSpec{3, {5}, 2, false}, Rng(13));
  Rng rng(14);
  const auto fwd = forward(small, support::random_matrix(2, 3, rng));
  try {
    backward(other, fwd.cache, Matrix(2, 2));
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Shape);
  }
  EXPECT_THROW(backward(small, fwd.cache, Matrix(3, 2)), Error);
}

TEST(Backward, EndToEndLossGradientMatchesFiniteDifferences) {
  Rng rng(15);
  const Matrix x = support::random_matrix(6, 3, rng);
  const std::vector<int> t{0, 1, 1, 0, 1, 0};
  for (LossKind kind : {LossKind::CE, LossKind::SCE, LossKind::DAC, LossKind::IDAC, LossKind::AGCE}) {
    LossSpec spec;
    spec.kind = kind;
    spec.alpha = 2.0;
    spec.eta_tilde = 0.3;
    spec.q = 0.75;
    spec.a = 0.5;
    const MlpState base = init_mlp(MlpSpec{3, {5, 4}, 2, has_abstention(kind)}, Rng(16));
    const auto fwd = forward(base, x);
    const auto loss = compute_loss(spec, fwd.logits, t, 1.0);
    const auto analytic = flatten_gradients(backward(base, fwd.cache, loss.grad_logits));
    const auto f = [&](std::span<const double> p) {
      MlpState s = base;
      assign_parameters(s, p);
      return compute_loss(spec, predict_logits(s, x), t, 1.0).loss;
    };
    const auto numeric = finite_diff_grad(f, flatten_parameters(base), 1e-6);
    EXPECT_LT(max_relative_error(analytic, numeric, 1e-4), 1e-4) << to_string(kind);
  }
}

TEST(Parameters, FlattenAssignRoundTrip) {
  MlpState s = init_mlp(MlpSpec{4, {3}, 2, true}, Rng(17));
  const auto flat = flatten_parameters(s);
  EXPECT_EQ(flat.size(), s.parameter_count());
  MlpState t = zero_state(s.spec);
  assign_parameters(t, flat);
  EXPECT_EQ(flatten_parameters(t), flat);
  EXPECT_THROW(assign_parameters(t, std::vector<double>(3)), Error);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  support::TempDir dir;
  MlpState s = init_mlp(MlpSpec{4, {6, 5}, 2, true}, Rng(18));
  // Give the momentum buffers non-trivial content.
  Rng rng(19);
  const auto fwd = forward(s, support::random_matrix(3, 4, rng));
  sgd_step(s, backward(s, fwd.cache, support::random_matrix(3, 3, rng)), 0.1, OptimConfig{});
  s.layers[0].weights(0, 0) = -0.0;
  s.layers[1].bias(0, 1) = 1e-310;  // subnormal
  CheckpointMeta meta;
  meta.seed = 0xfeedfacecafebeefULL;
  meta.epoch = 17;
  meta.extra = {{"run_id", "r"}, {"threshold", 0.5}};
  save_checkpoint(dir / "ckpt.bin", s, meta);
  const auto loaded = load_checkpoint(dir / "ckpt.bin");
  EXPECT_EQ(loaded.state, s);
  EXPECT_TRUE(std::signbit(loaded.state.layers[0].weights(0, 0)));
  EXPECT_EQ(loaded.meta.seed, meta.seed);
  EXPECT_EQ(loaded.meta.epoch, 17);
  EXPECT_EQ(loaded.meta.extra, meta.extra);
  EXPECT_EQ(flatten_parameters(loaded.state), flatten_parameters(s));
}

TEST(Checkpoint, HeaderIsJsonAfterMagic) {
  support::TempDir dir;
  const MlpState s = init_mlp(MlpSpec{2, {}, 2, false}, Rng(20));
  save_checkpoint(dir / "c.bin", s, CheckpointMeta{});
  const std::string bytes = support::read_file(dir / "c.bin");
  ASSERT_GT(bytes.size(), 16u);
  EXPECT_EQ(bytes.substr(0, 8), "IDACCKP1");
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | static_cast<unsigned char>(bytes[8 + i]);
  const auto header = nlohmann::json::parse(bytes.substr(16, len));
  EXPECT_EQ(header.at("parameter_count"), s.parameter_count());
  EXPECT_EQ(mlp_spec_from_json(header.at("spec")), s.spec);
  EXPECT_EQ(bytes.size(), 16 + len + 2 * 8 * s.parameter_count());
}

TEST(Checkpoint, MissingAndCorruptFiles) {
  support::TempDir dir;
  try {
    load_checkpoint(dir / "absent.bin");
    FAIL() << "expected an io error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
  support::write_file(dir / "bad.bin", "NOTACKPTxxxxxxxxxxxxxxxxxx");
  EXPECT_THROW(load_checkpoint(dir / "bad.bin"), Error);

  const MlpState s = init_mlp(MlpSpec{2, {3}, 2, false}, Rng(21));
  save_checkpoint(dir / "ok.bin", s, CheckpointMeta{});
  std::string bytes = support::read_file(dir / "ok.bin");
  bytes.resize(bytes.size() - 5);
  support::write_file(dir / "short.bin", bytes);
  EXPECT_THROW(load_checkpoint(dir / "short.bin"), Error);
}
