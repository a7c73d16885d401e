#include <algorithm>
#include <map>

#include <gtest/gtest.h>

#include "idac/error.hpp"
#include "idac/experiment.hpp"
#include "idac/losses.hpp"
#include "test_support.hpp"

using namespace idac;
using nlohmann::json;

namespace {

json tiny_config(const std::string& loss = "CE") {
  json j = {{"loss", {{"kind", loss}}},
            {"model", {{"hidden_dims", {8}}}},
            {"optim", {{"lr0", 0.05}, {"milestones", {4}}}},
            {"total_epochs", 6},
            {"batch_size", 32},
            {"seed", 5},
            {"eval", {{"n_bootstrap", 50}}}};
  if (loss == "DAC" || loss == "IDAC") j["loss"]["alpha"] = 1.0;
  if (loss == "IDAC") j["loss"]["eta_tilde"] = 0.2;
  if (loss == "NGCE" || loss == "AGCE") j["loss"]["q"] = 0.7;
  if (loss == "AGCE") j["loss"]["a"] = 1.0;
  return j;
}

TrainConfig tiny(const std::string& loss = "CE") { return train_config_from_json(tiny_config(loss)); }

const Dataset& data() {
  static const Dataset ds = support::small_gaussians();
  return ds;
}

}  // namespace

TEST(Run, SeparableProblemIsLearnedQuickly) {
  const Dataset easy = support::small_gaussians(3, 3.0, 0.5);
  json j = tiny_config();
  j["total_epochs"] = 20;
  const auto r = run(train_config_from_json(j), easy);
  ASSERT_FALSE(r.failure.has_value());
  EXPECT_GE(r.selected_val_auroc, 0.99);
  ASSERT_TRUE(r.test.has_value());
  EXPECT_GE(r.test->auroc, 0.99);
}

TEST(Run, RecordsEveryEpoch) {
  const auto r = run(tiny("IDAC"), data());
  ASSERT_EQ(r.epochs.size(), 6u);
  for (std::size_t e = 0; e < r.epochs.size(); ++e) {
    const auto& rec = r.epochs[e];
    EXPECT_EQ(rec.epoch, static_cast<int>(e));
    EXPECT_DOUBLE_EQ(rec.lr, e < 4 ? 0.05 : 0.005);
    ASSERT_TRUE(rec.eta_hat.has_value());
    EXPECT_GE(*rec.eta_hat, 0.0);
    EXPECT_LE(*rec.eta_hat, 1.0);
    EXPECT_EQ(rec.alpha, 1.0);
  }
  EXPECT_EQ(r.eta_tilde, 0.2);
  EXPECT_FALSE(run(tiny(), data()).epochs[0].eta_hat.has_value());
}

TEST(Run, SelectionIsEarliestArgmaxOfValidationAuroc) {
  for (const char* loss : {"CE", "DAC", "SCE"}) {
    const auto r = run(tiny(loss), data());
    int best = 0;
    for (std::size_t e = 1; e < r.epochs.size(); ++e) {
      if (r.epochs[e].val_auroc > r.epochs[static_cast<std::size_t>(best)].val_auroc) best = static_cast<int>(e);
    }
    EXPECT_EQ(r.selected_epoch, best) << loss;
    EXPECT_EQ(r.selected_val_auroc, r.epochs[static_cast<std::size_t>(best)].val_auroc);
  }
}

TEST(Run, SelectedWeightsReproduceTestMetrics) {
  const TrainConfig config = tiny("IDAC");
  const auto r = run(config, data());
  const EvalSettings settings{0.5, 50, bootstrap_seed(config.seed), 1};
  EXPECT_EQ(evaluate_model(r.selected_state, data(), Split::Test, settings), *r.test);
}

TEST(Run, DeletingTheAbstentionColumnLeavesMetricsUnchanged) {
  const TrainConfig config = tiny("IDAC");
  const auto r = run(config, data());
  MlpState plain = r.selected_state;
  plain.spec.abstain_head = false;
  auto& last = plain.layers.back();
  const std::size_t k = plain.spec.num_classes;
  Matrix w(last.weights.rows(), k);
  Matrix b(1, k);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t c = 0; c < k; ++c) w(i, c) = last.weights(i, c);
  }
  for (std::size_t c = 0; c < k; ++c) b(0, c) = last.bias(0, c);
  last.weights = w;
  last.bias = b;
  last.weights_velocity = Matrix(w.rows(), k);
  last.bias_velocity = Matrix(1, k);

  const EvalSettings settings{0.5, 50, 11, 1};
  const auto with_head = evaluate_model(r.selected_state, data(), Split::Test, settings);
  const auto without = evaluate_model(plain, data(), Split::Test, settings);
  EXPECT_EQ(with_head, without);
  const Batch test = select_split(data(), Split::Test);
  EXPECT_EQ(positive_scores(r.selected_state, test.features), positive_scores(plain, test.features));
}

TEST(Run, WarmupIsPlainCrossEntropyOverTheAbstainingModel) {
  // DAC and IDAC share the model and the warm-up objective, so their warm-up epochs coincide.
  json idac = tiny_config("IDAC");
  json dac = tiny_config("DAC");
  idac["warmup_epochs"] = dac["warmup_epochs"] = 3;
  const auto a = run(train_config_from_json(idac), data());
  const auto b = run(train_config_from_json(dac), data());
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_TRUE(a.epochs[e].warmup);
    EXPECT_EQ(a.epochs[e].alpha, 0.0);
    EXPECT_EQ(a.epochs[e].train_loss, b.epochs[e].train_loss);
    EXPECT_EQ(a.epochs[e].val_auroc, b.epochs[e].val_auroc);
    EXPECT_EQ(a.epochs[e].eta_hat, b.epochs[e].eta_hat);
  }
  EXPECT_FALSE(a.epochs[3].warmup);
  EXPECT_EQ(a.epochs[3].alpha, 1.0);
  EXPECT_NE(a.epochs[3].train_loss, b.epochs[3].train_loss);
}

TEST(Run, NoiseIsInjectedIntoTrainOnlyAndRecorded) {
  json j = tiny_config("IDAC");
  j["noise"] = {{"rate", 0.3}};
  j["eta_tilde_policy"] = "use-injected-rate";
  j["loss"].erase("eta_tilde");
  const auto r = run(train_config_from_json(j), data());
  ASSERT_TRUE(r.noise.has_value());
  EXPECT_EQ(r.noise->flipped_indices.size(), 60u);
  EXPECT_EQ(r.eta_tilde, 0.3);
  EXPECT_EQ(r.config.loss.eta_tilde, 0.3);
}

TEST(Run, UnresolvedEtaTildeIsAConfigError) {
  json j = tiny_config("IDAC");
  j["loss"].erase("eta_tilde");
  try {
    run(train_config_from_json(j), data());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(Run, ArtifactsAreByteIdenticalAcrossRepeats) {
  support::TempDir dir;
  json j = tiny_config("IDAC");
  j["noise"] = {{"rate", 0.1}};
  const TrainConfig config = train_config_from_json(j);
  RunOptions a;
  a.output_dir = dir / "a";
  RunOptions b;
  b.output_dir = dir / "b";
  b.eval_threads = 3;
  run(config, data(), a);
  run(config, data(), b);
  for (const char* name : {"epochs.jsonl", "summary.json", "checkpoint.bin", "noise_record.json"}) {
    const auto left = support::read_file(dir / "a" / name);
    EXPECT_FALSE(left.empty()) << name;
    EXPECT_EQ(left, support::read_file(dir / "b" / name)) << name;
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "timings.jsonl"));
  const auto summary = json::parse(support::read_file(dir / "a" / "summary.json"));
  EXPECT_EQ(summary.at("epochs"), 6);
  EXPECT_TRUE(summary.at("failure").is_null());
}

TEST(Run, CheckpointCarriesEvaluationSettings) {
  support::TempDir dir;
  RunOptions opts;
  opts.output_dir = dir.path();
  const auto r = run(tiny(), data(), opts);
  const auto ckpt = load_checkpoint(dir / "checkpoint.bin");
  EXPECT_EQ(ckpt.state, r.selected_state);
  EXPECT_EQ(ckpt.meta.epoch, r.selected_epoch);
  const EvalSettings settings{ckpt.meta.extra.at("threshold").get<double>(),
                              ckpt.meta.extra.at("n_bootstrap").get<std::size_t>(),
                              ckpt.meta.extra.at("bootstrap_seed").get<std::uint64_t>(), 1};
  EXPECT_EQ(evaluate_model(ckpt.state, data(), Split::Test, settings), *r.test);
}

TEST(Run, DivergenceIsRecordedNotThrown) {
  json j = tiny_config();
  j["optim"]["lr0"] = 1e300;
  j["optim"]["momentum"] = 0.0;
  const auto r = run(train_config_from_json(j), data());
  ASSERT_TRUE(r.failure.has_value());
  EXPECT_LT(r.epochs.size(), 6u);
  EXPECT_FALSE(r.final_epoch_test_auroc.has_value());
  EXPECT_FALSE(summary_json(r).at("failure").is_null());
}

TEST(Run, RejectsMismatchedDatasets) {
  json j = tiny_config();
  j["model"]["input_dim"] = 5;
  EXPECT_THROW(run(train_config_from_json(j), data()), Error);
  Dataset no_val = data();
  for (auto& s : no_val.split) {
    if (s == Split::Val) s = Split::Train;
  }
  EXPECT_THROW(run(tiny(), no_val), Error);
}

TEST(EpochJson, WallTimeIsExcluded) {
  EpochRecord rec;
  rec.wall_time_s = 3.5;
  const json j = to_json(rec);
  EXPECT_FALSE(j.contains("wall_time_s"));
  EXPECT_EQ(j.at("phase"), "train");
  EXPECT_TRUE(j.at("eta_hat").is_null());
}

// ---------------------------------------------------------------------------

TEST(Grid, EnumerationIsCartesianLastAxisFastest) {
  const GridSpec grid = grid_from_json(json::parse(R"({"loss.alpha": [1, 10, 20], "warmup_epochs": [10, 30, 50]})"));
  EXPECT_EQ(grid.size(), 9u);
  const auto points = enumerate_grid(grid);
  ASSERT_EQ(points.size(), 9u);
  EXPECT_EQ(grid_point_label(points[0]), "loss.alpha=1,warmup_epochs=10");
  EXPECT_EQ(grid_point_label(points[1]), "loss.alpha=1,warmup_epochs=30");
  EXPECT_EQ(grid_point_label(points[8]), "loss.alpha=20,warmup_epochs=50");
  EXPECT_THROW(grid_from_json(json::object()), Error);
  EXPECT_THROW(grid_from_json(json{{"seed", json::array()}}), Error);
  EXPECT_THROW(grid_from_json(json{{"seed", 3}}), Error);
}

TEST(Grid, SizeOneEqualsASingleRun) {
  const json base = tiny_config("IDAC");
  const auto entries = grid_search(base, grid_from_json(json{{"loss.alpha", {1.0}}}), data());
  ASSERT_EQ(entries.size(), 1u);
  ASSERT_TRUE(entries[0].result.has_value());
  const auto direct = run(train_config_from_json(base), data());
  EXPECT_EQ(entries[0].result->selected_epoch, direct.selected_epoch);
  EXPECT_EQ(entries[0].result->test, direct.test);
  EXPECT_EQ(entries[0].result->selected_state, direct.selected_state);
}

TEST(Grid, IdacThreeByThree) {
  json base = tiny_config("IDAC");
  base["total_epochs"] = 3;
  const auto grid = grid_from_json(json{{"loss.alpha", {1, 10, 20}}, {"warmup_epochs", {0, 1, 2}}});
  const auto entries = grid_search(base, grid, data());
  ASSERT_EQ(entries.size(), 9u);
  for (std::size_t i = 1; i < entries.size(); ++i) {
    EXPECT_GE(entries[i - 1].result->selected_val_auroc, entries[i].result->selected_val_auroc);
  }
  std::vector<std::size_t> indices;
  for (const auto& e : entries) indices.push_back(e.index);
  std::sort(indices.begin(), indices.end());
  for (std::size_t i = 0; i < indices.size(); ++i) EXPECT_EQ(indices[i], i);
}

TEST(Grid, AgceEighteenPointsParallelMatchesSerial) {
  json base = tiny_config("AGCE");
  base["total_epochs"] = 2;
  const auto grid = grid_from_json(json{{"loss.a", {1e-3, 1.0}}, {"loss.q", {0.5, 1.0, 2.0}}, {"seed", {1, 2, 3}}});
  const auto serial = grid_search(base, grid, data());
  GridOptions options;
  options.parallel = 4;
  const auto parallel = grid_search(base, grid, data(), options);
  ASSERT_EQ(serial.size(), 18u);
  ASSERT_EQ(parallel.size(), 18u);
  EXPECT_EQ(grid_results_json(serial), grid_results_json(parallel));
}

TEST(Grid, PointResultsDoNotDependOnOrder) {
  const json base = tiny_config("SCE");
  const auto forward_order = grid_search(base, grid_from_json(json{{"loss.alpha", {0.1, 1.0}}}), data());
  const auto reversed = grid_search(base, grid_from_json(json{{"loss.alpha", {1.0, 0.1}}}), data());
  std::map<std::string, MetricsReport> by_label;
  for (const auto& e : forward_order) by_label[grid_point_label(e.point)] = *e.result->test;
  for (const auto& e : reversed) EXPECT_EQ(by_label.at(grid_point_label(e.point)), *e.result->test);
}

TEST(Grid, FailuresAreIsolated) {
  support::TempDir dir;
  json base = tiny_config("IDAC");
  base["total_epochs"] = 2;
  GridOptions options;
  options.output_dir = dir.path();
  options.parallel = 2;
  const auto entries = grid_search(base, grid_from_json(json{{"loss.alpha", {1.0, "big", -3.0}}}), data(), options);
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_TRUE(entries[0].result.has_value());
  EXPECT_FALSE(entries[0].error.has_value());
  EXPECT_TRUE(entries[1].error.has_value());
  EXPECT_TRUE(entries[2].error.has_value());
  EXPECT_LT(entries[1].index, entries[2].index);
  const auto results = json::parse(support::read_file(dir / "grid_results.json"));
  EXPECT_EQ(results.size(), 3u);
  EXPECT_EQ(results[0].at("status"), "ok");
  EXPECT_EQ(results[2].at("status"), "error");
  const auto table = support::read_file(dir / "grid_table.txt");
  EXPECT_NE(table.find("error in loss.alpha=big"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "loss.alpha=1.0" / "summary.json"));
}
