// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <fmt/format.h>

#include "idac/data.hpp"
#include "idac/experiment.hpp"
#include "idac/gradcheck.hpp"
#include "idac/losses.hpp"
#include "idac/metrics.hpp"
#include "idac/noise.hpp"
#include "idac/optim.hpp"

using namespace idac;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Matrix random_logits(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * (2.0 * rng.uniform() - 1.0);
  return m;
}

std::vector<int> random_targets(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<int> t(n);
  for (int& v : t) v = static_cast<int>(rng.below(k));
  return t;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = Clock::now();
  GradCheckOptions options;  // 50 instances per loss, tolerance 1e-5
  const auto report = run_gradcheck_suite(options);
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  std::size_t min_instances = options.instances_per_loss;
  for (const auto& l : report.losses) {
    worst = std::max(worst, l.max_rel_err);
    min_instances = std::min(min_instances, l.instances);
  }
  const bool pass = report.all_passed() && report.losses.size() == 7 && min_instances >= 50 && elapsed < 30.0;
  return {pass, fmt::format("{}/{} losses, >= {} instances each, worst rel err {:.2e} (< {:.0e}), {:.1f} s",
                            report.passed_count(), report.losses.size(), min_instances, worst, options.tolerance,
                            elapsed)};
}

Outcome reduction_identities() {
  Rng rng(2);
  double dac_worst = 0.0;
  bool idac_exact = true;
  bool sce_exact = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(16);
    const std::size_t k = 2 + rng.below(4);
    const Matrix z = random_logits(n, k, rng, 3.0);
    const auto t = random_targets(n, k, rng);

    // DAC with the abstention logit pinned at -60.
    Matrix za(n, k + 1);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < k; ++c) za(r, c) = z(r, c);
      za(r, k) = -60.0;
    }
    const auto ce = ce_loss(z, t);
    for (double alpha : {0.0, 1.0, 20.0}) {
      const auto dac = dac_loss(za, t, alpha);
      dac_worst = std::max(dac_worst, std::abs(dac.loss - ce.loss));
      for (std::size_t r = 0; r < n; ++r) {
        dac_worst = std::max(dac_worst, max_abs_diff(dac.grad_logits.row(r).first(k), ce.grad_logits.row(r)));
      }
    }

    // IDAC with eta_tilde set to the batch's own eta_hat.
    LossSpec spec;
    spec.kind = LossKind::IDAC;
    spec.alpha = 0.0;
    spec.eta_tilde = 0.5;
    const Matrix zi = random_logits(n, k + 1, rng, 3.0);
    const auto unregularized = idac_loss(zi, t, spec);
    spec.alpha = 10.0;
    spec.eta_tilde = *unregularized.eta_hat;
    const auto regularized = idac_loss(zi, t, spec);
    idac_exact = idac_exact && regularized.loss == unregularized.loss &&
                 regularized.grad_logits == unregularized.grad_logits;

    // SCE is assembled from a CE half that is ce_loss itself plus the RCE half.
    const auto terms = sce_terms(z, t, -4.0);
    LossSpec sce_spec;
    sce_spec.kind = LossKind::SCE;
    const auto sce = sce_loss(z, t, sce_spec);
    sce_exact = sce_exact && terms.ce.loss == ce.loss && terms.ce.grad_logits == ce.grad_logits &&
                sce.loss == terms.ce.loss + terms.rce.loss;
  }
  const bool pass = dac_worst < 1e-8 && idac_exact && sce_exact;
  return {pass, fmt::format("DAC(-60) vs CE max diff {:.1e} (< 1e-8); IDAC regularizer at eta_hat exact: {}; "
                            "SCE CE term bit-identical: {}",
                            dac_worst, idac_exact ? "yes" : "no", sce_exact ? "yes" : "no")};
}

double pairwise_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) num += 1.0;
      if (s[i] == s[j]) num += 0.5;
    }
  }
  return num / pairs;
}

Outcome auroc_oracle() {
  Rng rng(3);
  int exact = 0;
  int instances = 0;
  std::size_t tied_instances = 0;
  for (; instances < 100; ++instances) {
    const std::size_t n = 2 + rng.below(199);  // 2..200
    const std::uint64_t levels = 1 + rng.below(8);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2));
      // Few distinct levels, shifted upward for positives half the time.
      const std::uint64_t shift = (y[i] == 1 && rng.below(2) == 0) ? 1 : 0;
      s[i] = 0.25 * static_cast<double>(std::min(levels - 1, rng.below(levels) + shift));
    }
    std::vector<double> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) ++tied_instances;
    if (auroc(s, y) == pairwise_auroc(s, y)) ++exact;
  }
  const std::string cell = format_point_ci(0.933, 0.912, 0.956);
  const bool pass = exact == instances && cell == "93.3 [91.2, 95.6]";
  return {pass, fmt::format("{}/{} instances exactly equal ({} with ties); formatter gives \"{}\"", exact, instances,
                            tied_instances, cell)};
}

Outcome noise_exactness() {
  SyntheticParams params;
  const Dataset ds = gen_synthetic(SyntheticKind::TwoGaussians, {10000, 1000, 1000}, params, 4);
  bool counts = true;
  bool deterministic = true;
  bool confined = true;
  for (double rate : {0.01, 0.03, 0.05, 0.07, 0.15, 0.30, 0.50}) {
    const auto a = inject_noise(ds, rate, 99);
    const auto b = inject_noise(ds, rate, 99);
    const auto expected = static_cast<std::size_t>(std::llround(rate * 10000.0));
    std::size_t changed = 0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
      if (a.dataset.labels[r] == ds.labels[r]) continue;
      ++changed;
      if (ds.split[r] != Split::Train) confined = false;
    }
    counts = counts && changed == expected && a.record.flipped_indices.size() == expected;
    deterministic = deterministic && a.record == b.record && a.dataset == b.dataset;
  }
  const bool pass = counts && deterministic && confined;
  return {pass, fmt::format("N_train=10000, 7 rates: counts exact {}, deterministic {}, train-only {}",
                            counts ? "yes" : "no", deterministic ? "yes" : "no", confined ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// Directional experiment shared by criteria 5 and 6.

constexpr double kNoiseRate = 0.40;
constexpr int kWarmupEpochs = 10;
constexpr int kTotalEpochs = 150;

struct DirectionalRuns {
  std::vector<ExperimentResult> ce;
  std::vector<ExperimentResult> idac;
  double elapsed_s = 0.0;
};

Dataset directional_dataset() {
  SyntheticParams params;
  params.dim = 10;
  params.mean.assign(10, 0.25);
  params.sigma = 1.0;
  return gen_synthetic(SyntheticKind::TwoGaussians, {4000, 500, 500}, params, 7);
}

TrainConfig directional_config(LossKind kind, std::uint64_t seed) {
  TrainConfig c;
  c.loss.kind = kind;
  c.model.hidden_dims = {256, 256};
  c.model.abstain_head = has_abstention(kind);
  c.total_epochs = kTotalEpochs;
  c.batch_size = 512;
  c.seed = seed;
  c.noise = NoiseConfig{kNoiseRate, seed};
  if (kind == LossKind::IDAC) {
    c.loss.alpha = 1.0;
    c.loss.eta_tilde = kNoiseRate;
    c.eta_tilde_policy = EtaExplicit{kNoiseRate};
    c.warmup_epochs = kWarmupEpochs;
  }
  return c;
}

const DirectionalRuns& directional_runs() {
  static const DirectionalRuns runs = [] {
    DirectionalRuns r;
    const Dataset ds = directional_dataset();
    const auto start = Clock::now();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      r.ce.push_back(run(directional_config(LossKind::CE, seed), ds));
      r.idac.push_back(run(directional_config(LossKind::IDAC, seed), ds));
      std::printf("  seed %llu: CE final %.4f selected %.4f | IDAC final %.4f selected %.4f\n",
                  static_cast<unsigned long long>(seed), *r.ce.back().final_epoch_test_auroc, r.ce.back().test->auroc,
                  *r.idac.back().final_epoch_test_auroc, r.idac.back().test->auroc);
      std::fflush(stdout);
    }
    r.elapsed_s = seconds_since(start);
    return r;
  }();
  return runs;
}

Outcome directional_auroc() {
  const auto& runs = directional_runs();
  std::vector<double> ce_final, ce_sel, idac_final, idac_sel;
  for (const auto& r : runs.ce) {
    if (r.failure) return {false, fmt::format("CE run {} diverged", r.config.seed)};
    ce_final.push_back(*r.final_epoch_test_auroc);
    ce_sel.push_back(r.test->auroc);
  }
  for (const auto& r : runs.idac) {
    if (r.failure) return {false, fmt::format("IDAC run {} diverged", r.config.seed)};
    idac_final.push_back(*r.final_epoch_test_auroc);
    idac_sel.push_back(r.test->auroc);
  }
  const double cf = median(ce_final), cs = median(ce_sel), xf = median(idac_final), xs = median(idac_sel);
  const bool pass = xf >= cf + 0.03 && xs >= cs - 0.005 && runs.elapsed_s < 600.0;
  return {pass, fmt::format("median final-epoch AUROC IDAC {:.4f} vs CE {:.4f} (margin {:+.4f}, need >= +0.03); "
                            "selected IDAC {:.4f} vs CE {:.4f} (margin {:+.4f}, need >= -0.005); 10 runs in {:.0f} s",
                            xf, cf, xf - cf, xs, cs, xs - cs, runs.elapsed_s)};
}

Outcome abstention_dynamics() {
  const auto& runs = directional_runs();
  // Per-epoch median over seeds of the argmax abstention rate.
  std::vector<double> curve(kTotalEpochs);
  for (int e = 0; e < kTotalEpochs; ++e) {
    std::vector<double> at_epoch;
    for (const auto& r : runs.idac) {
      if (static_cast<int>(r.epochs.size()) <= e) return {false, "an IDAC run stopped early"};
      at_epoch.push_back(r.epochs[static_cast<std::size_t>(e)].abstain_rate.value_or(0.0));
    }
    curve[static_cast<std::size_t>(e)] = median(at_epoch);
  }
  double early_peak = 0.0;
  for (int e = kWarmupEpochs; e < kWarmupEpochs + 10; ++e) early_peak = std::max(early_peak, curve[static_cast<std::size_t>(e)]);
  double late_mean = 0.0;
  for (int e = kTotalEpochs - 10; e < kTotalEpochs; ++e) late_mean += curve[static_cast<std::size_t>(e)] / 10.0;

  std::string per_seed;
  for (const auto& r : runs.idac) {
    double peak = 0.0, late = 0.0;
    for (int e = kWarmupEpochs; e < kWarmupEpochs + 10; ++e) peak = std::max(peak, *r.epochs[static_cast<std::size_t>(e)].abstain_rate);
    for (int e = kTotalEpochs - 10; e < kTotalEpochs; ++e) late += *r.epochs[static_cast<std::size_t>(e)].abstain_rate / 10.0;
    per_seed += fmt::format(" {:.2f}/{:.3f}", peak, late);
  }
  std::printf("  per-seed early peak / final-10 mean:%s\n", per_seed.c_str());

  const double lo = 0.5 * kNoiseRate, hi = 1.5 * kNoiseRate;
  const bool pass = early_peak > kNoiseRate && late_mean >= lo && late_mean <= hi;
  return {pass, fmt::format("median curve: peak {:.3f} in first 10 post-warm-up epochs (need > {:.2f}); "
                            "final-10 mean {:.3f} (need [{:.2f}, {:.2f}])",
                            early_peak, kNoiseRate, late_mean, lo, hi)};
}

// ---------------------------------------------------------------------------

Dataset small_dataset() {
  SyntheticParams params;
  params.dim = 3;
  return gen_synthetic(SyntheticKind::TwoGaussians, {300, 100, 100}, params, 13);
}

json small_config() {
  return json::parse(R"({"loss": {"kind": "IDAC", "alpha": 1, "eta_tilde": 0.2},
    "model": {"hidden_dims": [16]}, "optim": {"lr0": 0.05, "milestones": [5]},
    "total_epochs": 8, "warmup_epochs": 2, "batch_size": 64, "seed": 21,
    "noise": {"rate": 0.2}, "eval": {"n_bootstrap": 200}})");
}

Outcome protocol_fidelity() {
  const OptimConfig optim;
  const bool schedule = lr_at(0, optim) == 0.1 && lr_at(99, optim) == 0.1 &&
                        std::abs(lr_at(100, optim) - 0.01) < 1e-15 && std::abs(lr_at(249, optim) - 0.01) < 1e-15 &&
                        std::abs(lr_at(250, optim) - 0.001) < 1e-15;

  const auto r = run(train_config_from_json(small_config()), small_dataset());
  int best = 0;
  for (std::size_t e = 1; e < r.epochs.size(); ++e) {
    if (r.epochs[e].val_auroc > r.epochs[static_cast<std::size_t>(best)].val_auroc) best = static_cast<int>(e);
  }
  const bool selection = r.selected_epoch == best;

  MlpState plain = r.selected_state;
  const std::size_t k = plain.spec.num_classes;
  auto& last = plain.layers.back();
  Matrix w(last.weights.rows(), k), b(1, k);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t c = 0; c < k; ++c) w(i, c) = last.weights(i, c);
  }
  for (std::size_t c = 0; c < k; ++c) b(0, c) = last.bias(0, c);
  last.weights = w;
  last.bias = b;
  last.weights_velocity = Matrix(w.rows(), k);
  last.bias_velocity = Matrix(1, k);
  plain.spec.abstain_head = false;
  const EvalSettings settings{0.5, 200, bootstrap_seed(r.config.seed), 1};
  const bool deletion = evaluate_model(plain, small_dataset(), Split::Test, settings) == *r.test;

  return {schedule && selection && deletion,
          fmt::format("lr 0.1 -> 0.01 @100 -> 0.001 @250: {}; selected epoch {} is argmax val AUROC: {}; "
                      "metrics without abstention column bit-identical: {}",
                      schedule ? "yes" : "no", r.selected_epoch, selection ? "yes" : "no", deletion ? "yes" : "no")};
}

Outcome determinism() {
  const auto root = std::filesystem::temp_directory_path() / fmt::format("idac-acceptance-{}", ::getpid());
  std::filesystem::remove_all(root);
  const Dataset ds = small_dataset();
  const TrainConfig config = train_config_from_json(small_config());

  RunOptions a, b;
  a.output_dir = root / "train-a";
  b.output_dir = root / "train-b";
  b.eval_threads = 3;
  run(config, ds, a);
  run(config, ds, b);
  bool train_same = true;
  for (const char* f : {"epochs.jsonl", "summary.json"}) {
    train_same = train_same && !read_file(root / "train-a" / f).empty() &&
                 read_file(root / "train-a" / f) == read_file(root / "train-b" / f);
  }

  // The same grid three times: serial, three workers, serial again.
  const GridSpec grid = grid_from_json(json{{"loss.alpha", {0.5, 2.0}}, {"warmup_epochs", {1, 3}}});
  const std::vector<std::filesystem::path> dirs = {root / "grid-serial", root / "grid-parallel3", root / "grid-serial-again"};
  const unsigned parallel[] = {1, 3, 1};
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    GridOptions options;
    options.parallel = parallel[i];
    options.output_dir = dirs[i];
    grid_search(small_config(), grid, ds, options);
  }
  bool grid_same = true;
  std::size_t points = 0;
  for (const auto& e : std::filesystem::directory_iterator(dirs[0])) {
    if (!e.is_directory()) continue;
    ++points;
    for (std::size_t i = 1; i < dirs.size(); ++i) {
      for (const char* f : {"epochs.jsonl", "summary.json"}) {
        const auto reference = read_file(e.path() / f);
        grid_same = grid_same && !reference.empty() && reference == read_file(dirs[i] / e.path().filename() / f);
      }
    }
  }
  for (std::size_t i = 1; i < dirs.size(); ++i) {
    grid_same = grid_same && read_file(dirs[0] / "grid_results.json") == read_file(dirs[i] / "grid_results.json");
  }
  grid_same = grid_same && points == grid.size();
  std::filesystem::remove_all(root);
  return {train_same && grid_same, fmt::format("repeated train byte-identical: {}; grid --parallel 1/3/1 byte-identical: {}",
                                               train_same ? "yes" : "no", grid_same ? "yes" : "no")};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradient_correctness}, {2, "reduction identities", reduction_identities},
      {3, "AUROC oracle equivalence", auroc_oracle},     {4, "noise injector exactness", noise_exactness},
      {5, "directional noisy-label experiment", directional_auroc},
      {6, "abstention dynamics", abstention_dynamics},   {7, "protocol fidelity", protocol_fidelity},
      {8, "determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    if (!o.pass) ++failed;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu acceptance criteria pass\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
