#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "idac/config.hpp"
#include "idac/data.hpp"
#include "idac/experiment.hpp"
#include "idac/gradcheck.hpp"
#include "idac/metrics.hpp"
#include "idac/model.hpp"
#include "idac/noise.hpp"

namespace idac::cli {

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput:
    case ErrorKind::InvalidConfig:
    case ErrorKind::Parse:
    case ErrorKind::Schema:
    case ErrorKind::Shape:
      return kExitUsage;
    case ErrorKind::InvalidLabel:
    case ErrorKind::Io:
      return kExitData;
    case ErrorKind::NumericDegeneracy:
    case ErrorKind::TrainingDiverged:
    case ErrorKind::UndefinedMetric:
      return kExitNumeric;
  }
  return kExitUsage;
}

std::filesystem::path output_root() {
  const char* env = std::getenv("IDAC_OUTPUT_ROOT");
  if (env != nullptr && *env != '\0') return env;
  return "results";
}

namespace {

enum class Verbosity { Quiet, Normal, Verbose };

struct Context {
  std::ostream& out;
  std::ostream& err;
  Verbosity verbosity = Verbosity::Normal;

  bool chatty() const { return verbosity != Verbosity::Quiet; }
};

nlohmann::json read_json_file(const std::filesystem::path& path, ErrorKind missing_kind) {
  std::ifstream in(path);
  if (!in) fail(missing_kind, fmt::format("cannot open '{}'", path.string()));
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::Parse, fmt::format("'{}' is not valid JSON", path.string()));
  return j;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  out << j.dump(2) << '\n';
}

/// Config file (optional) with dotted-key overrides applied on top.
nlohmann::json load_config_json(const std::string& config_path, const std::vector<std::string>& overrides) {
  nlohmann::json j = config_path.empty() ? nlohmann::json::object() : read_json_file(config_path, ErrorKind::InvalidConfig);
  for (const auto& o : overrides) apply_override(j, o);
  return j;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string format_tolerance(double tol) {
  // 1e-05 -> 1e-5
  std::string s = fmt::format("{:.0e}", tol);
  const auto e = s.find('e');
  if (e != std::string::npos) {
    std::size_t digits = e + 2;
    while (digits + 1 < s.size() && s[digits] == '0') s.erase(digits, 1);
  }
  return s;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string kind = "two_gaussians";
  std::vector<std::size_t> n{4000, 500, 500};
  std::uint64_t seed = 0;
  std::size_t dim = 2;
  std::vector<double> mean;
  double mu = 1.0;
  double sigma = 1.0;
  double moon_noise = 0.1;
  std::string out;
};

std::filesystem::path manifest_path(const std::filesystem::path& data_path) {
  auto p = data_path;
  return p.replace_extension(".manifest.json");
}

int cmd_gen_data(const GenDataArgs& a, Context& ctx) {
  const SyntheticKind kind = parse_synthetic_kind(a.kind);
  if (a.n.size() != 3) fail(ErrorKind::InvalidInput, "--n takes three sizes: train,val,test");
  SyntheticParams params;
  params.dim = a.dim;
  params.mean = a.mean;
  params.mu = a.mu;
  params.sigma = a.sigma;
  params.moon_noise = a.moon_noise;
  const SplitSizes sizes{a.n[0], a.n[1], a.n[2]};
  const Dataset ds = gen_synthetic(kind, sizes, params, a.seed);

  const std::filesystem::path out =
      a.out.empty() ? output_root() / "data" / fmt::format("{}-seed{}.csv", a.kind, a.seed) : std::filesystem::path(a.out);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  save_dataset(ds, out);

  nlohmann::json manifest = {{"file", out.filename().string()},
                             {"kind", std::string(to_string(kind))},
                             {"seed", a.seed},
                             {"sizes", {{"train", sizes.train}, {"val", sizes.val}, {"test", sizes.test}}},
                             {"num_classes", ds.num_classes},
                             {"dim", ds.dim()},
                             {"params", to_json(params)}};
  if (kind == SyntheticKind::TwoGaussians) manifest["bayes_auroc"] = two_gaussians_bayes_auroc(params);
  write_json_file(manifest_path(out), manifest);

  if (ctx.chatty()) {
    ctx.out << fmt::format("{}: {} rows (train {}, val {}, test {}), {} features, {} classes\n", out.string(), ds.size(),
                           sizes.train, sizes.val, sizes.test, ds.dim(), ds.num_classes);
    if (manifest.contains("bayes_auroc")) {
      ctx.out << fmt::format("Bayes-optimal AUROC {:.4f}\n", manifest["bayes_auroc"].get<double>());
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// inject-noise

struct InjectArgs {
  std::string data;
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_inject_noise(const InjectArgs& a, Context& ctx) {
  const Dataset clean = load_dataset(a.data);
  const auto noisy = inject_noise(clean, a.rate, a.seed);

  std::filesystem::path out = a.out;
  if (out.empty()) {
    const std::filesystem::path in(a.data);
    out = in.parent_path() / (in.stem().string() + "-noisy" + in.extension().string());
  }
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  save_dataset(noisy.dataset, out);
  auto record_path = out;
  record_path.replace_extension(".noise.json");
  save_noise_record(noisy.record, record_path);

  if (ctx.chatty()) {
    ctx.out << fmt::format("flipped {} of {} train labels (rate {}, seed {})\n", noisy.record.flipped_indices.size(),
                           clean.count(Split::Train), a.rate, a.seed);
    ctx.out << fmt::format("wrote {} and {}\n", out.string(), record_path.string());
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string data;
  std::string out;
  std::string run_id;
  unsigned threads = 1;
};

void print_run_summary(const ExperimentResult& r, const std::filesystem::path& dir, Context& ctx) {
  if (!ctx.chatty()) return;
  ctx.out << fmt::format("run {}: {} epochs", r.run_id, r.epochs.size());
  if (r.selected_epoch >= 0) {
    ctx.out << fmt::format(", selected epoch {} (val AUROC {:.4f})", r.selected_epoch, r.selected_val_auroc);
  }
  ctx.out << '\n';
  if (r.test) {
    ctx.out << fmt::format("test AUROC {}  bal.acc {:.4f}  F1 {:.4f}\n",
                           format_point_ci(r.test->auroc, r.test->auroc_ci_low, r.test->auroc_ci_high),
                           r.test->balanced_accuracy, r.test->f1);
  }
  if (r.final_epoch_test_auroc) ctx.out << fmt::format("final-epoch test AUROC {:.4f}\n", *r.final_epoch_test_auroc);
  ctx.out << fmt::format("artifacts in {}\n", dir.string());
}

int cmd_train(const TrainArgs& a, Context& ctx) {
  // The whole configuration is checked before the dataset is touched.
  const TrainConfig config = train_config_from_json(load_config_json(a.config, a.overrides));
  const Dataset dataset = load_dataset(a.data);

  RunOptions options;
  options.run_id = a.run_id.empty() ? fmt::format("{}-seed{}", lowercase(to_string(config.loss.kind)), config.seed)
                                    : a.run_id;
  options.output_dir = a.out.empty() ? output_root() / options.run_id : std::filesystem::path(a.out);
  options.eval_threads = std::max(1u, a.threads);
  if (ctx.verbosity == Verbosity::Verbose) {
    options.on_epoch = [&ctx](const EpochRecord& e) {
      ctx.out << fmt::format("epoch {:4d} {:7s} loss {:.5f} val AUROC {:.4f}", e.epoch, e.warmup ? "warmup" : "train",
                             e.train_loss, e.val_auroc);
      if (e.abstain_rate) ctx.out << fmt::format(" abstain {:.3f} eta_hat {:.3f}", *e.abstain_rate, *e.eta_hat);
      ctx.out << '\n';
    };
  }
  const ExperimentResult result = run(config, dataset, options);
  print_run_summary(result, *options.output_dir, ctx);
  if (result.failure) {
    ctx.err << fmt::format("error: training diverged at epoch {}: {}\n", result.failure->epoch, result.failure->message);
    return kExitNumeric;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// grid

struct GridArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string grid;
  std::string data;
  std::string out;
  unsigned parallel = 1;
};

int cmd_grid(const GridArgs& a, Context& ctx) {
  const nlohmann::json base = load_config_json(a.config, a.overrides);
  const GridSpec grid = grid_from_json(read_json_file(a.grid, ErrorKind::InvalidConfig));
  // Every point must produce a valid configuration before any training starts.
  for (const auto& point : enumerate_grid(grid)) {
    nlohmann::json cfg = base;
    for (const auto& [key, value] : point) apply_override(cfg, key, value);
    try {
      train_config_from_json(cfg);
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("grid point {}: {}", grid_point_label(point), e.what()));
    }
  }
  const Dataset dataset = load_dataset(a.data);

  GridOptions options;
  options.parallel = std::max(1u, a.parallel);
  options.output_dir = a.out.empty() ? output_root() / "grid" : std::filesystem::path(a.out);
  if (ctx.verbosity == Verbosity::Verbose) {
    options.on_done = [&ctx](const GridEntry& e) {
      ctx.out << fmt::format("done {}: {}\n", grid_point_label(e.point), e.error ? "error" : "ok");
    };
  }
  const auto ranked = grid_search(base, grid, dataset, options);
  if (ctx.chatty()) {
    ctx.out << render_grid_table(ranked);
    ctx.out << fmt::format("results in {}\n", options.output_dir->string());
  }
  const bool any_ok =
      std::any_of(ranked.begin(), ranked.end(), [](const GridEntry& e) { return e.result && !e.result->failure; });
  return any_ok ? kExitOk : kExitNumeric;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::optional<double> threshold;
  std::optional<std::size_t> n_bootstrap;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string out;
};

template <typename T>
T extra_or(const nlohmann::json& extra, const char* key, T fallback) {
  if (!extra.contains(key)) return fallback;
  try {
    return extra.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Schema, fmt::format("checkpoint field '{}' has the wrong type", key));
  }
}

int cmd_eval(const EvalArgs& a, Context& ctx) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const Dataset dataset = load_dataset(a.data);
  const Split split = parse_split(a.split);

  EvalSettings settings;
  settings.threshold = a.threshold.value_or(extra_or(ckpt.meta.extra, "threshold", 0.5));
  settings.n_bootstrap = a.n_bootstrap.value_or(extra_or<std::size_t>(ckpt.meta.extra, "n_bootstrap", 1000));
  settings.seed = a.seed.value_or(extra_or(ckpt.meta.extra, "bootstrap_seed", bootstrap_seed(ckpt.meta.seed)));
  settings.threads = std::max(1u, a.threads);

  const MetricsReport report = evaluate_model(ckpt.state, dataset, split, settings);
  const nlohmann::json j = to_json(report);
  if (!a.out.empty()) write_json_file(a.out, j);
  ctx.out << j.dump(2) << '\n';
  if (ctx.chatty()) {
    ctx.out << fmt::format("{} AUROC {} (checkpoint epoch {})\n", to_string(split),
                           format_point_ci(report.auroc, report.auroc_ci_low, report.auroc_ci_high), ckpt.meta.epoch);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  std::size_t instances = 50;
  std::uint64_t seed = GradCheckOptions{}.seed;
  double tolerance = 1e-5;
};

int cmd_gradcheck(const GradcheckArgs& a, Context& ctx) {
  GradCheckOptions options;
  options.instances_per_loss = a.instances;
  options.seed = a.seed;
  options.tolerance = a.tolerance;
  const GradCheckReport report = run_gradcheck_suite(options);
  for (const auto& l : report.losses) {
    if (ctx.chatty()) {
      ctx.out << fmt::format("{:<5} {:3d} instances  max rel err {:.3e}  {}\n", to_string(l.kind), l.instances,
                             l.max_rel_err, l.passed ? "ok" : "FAIL");
    }
  }
  ctx.out << fmt::format("{}/{} losses pass (max rel err < {})\n", report.passed_count(), report.losses.size(),
                         format_tolerance(a.tolerance));
  return report.all_passed() ? kExitOk : kExitNumeric;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Context ctx{out, err};

  CLI::App app{"Noise-robust binary classification: losses, label-noise simulation, training and evaluation", "idac"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "idac 0.1.0");
  bool quiet = false;
  bool verbose = false;
  app.add_flag("-q,--quiet", quiet, "Only print errors and requested output");
  app.add_flag("-v,--verbose", verbose, "Print per-epoch progress");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic three-split dataset and its manifest");
  gen_cmd->add_option("--kind", gen.kind, "two_gaussians or two_moons")
      ->check(CLI::IsMember({"two_gaussians", "two_moons"}))
      ->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "Split sizes train,val,test")->delimiter(',')->expected(3)->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--dim", gen.dim, "Feature dimension")->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--mean", gen.mean, "two_gaussians class-1 mean (comma separated, length dim)")->delimiter(',');
  gen_cmd->add_option("--mu", gen.mu, "two_gaussians mean (mu, 0, ..., 0) when --mean is absent")->capture_default_str();
  gen_cmd->add_option("--sigma", gen.sigma, "two_gaussians standard deviation")->capture_default_str();
  gen_cmd->add_option("--moon-noise", gen.moon_noise, "two_moons jitter standard deviation")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output file (.csv or .bin); default $IDAC_OUTPUT_ROOT/data/<kind>-seed<seed>.csv");

  InjectArgs inj;
  auto* inj_cmd = app.add_subcommand("inject-noise", "Flip a fraction of training labels and record which");
  inj_cmd->add_option("--data", inj.data, "Input dataset (.csv or .bin)")->required();
  inj_cmd->add_option("--rate", inj.rate, "Fraction of train labels to corrupt")->required()->check(CLI::Range(0.0, 1.0));
  inj_cmd->add_option("--seed", inj.seed, "Noise seed")->capture_default_str();
  inj_cmd->add_option("--out", inj.out, "Output dataset; default <input>-noisy.<ext>. The record goes to <out>.noise.json");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train one model and write epochs.jsonl, summary.json and a checkpoint");
  train_cmd->add_option("--config", tr.config, "Training config JSON");
  train_cmd->add_option("--set", tr.overrides, "Override a config value, e.g. loss.alpha=10 (repeatable)");
  train_cmd->add_option("--data", tr.data, "Clean dataset (.csv or .bin)")->required();
  train_cmd->add_option("--out", tr.out, "Output directory; default $IDAC_OUTPUT_ROOT/<run-id>");
  train_cmd->add_option("--run-id", tr.run_id, "Run identifier; default <loss>-seed<seed>");
  train_cmd->add_option("--threads", tr.threads, "Bootstrap worker threads")->capture_default_str();

  GridArgs gr;
  auto* grid_cmd = app.add_subcommand("grid", "Train every point of a hyperparameter grid and rank by validation AUROC");
  grid_cmd->add_option("--config", gr.config, "Base training config JSON");
  grid_cmd->add_option("--set", gr.overrides, "Override a base config value (repeatable)");
  grid_cmd->add_option("--grid", gr.grid, "Grid JSON: {\"dotted.key\": [values, ...], ...}")->required();
  grid_cmd->add_option("--data", gr.data, "Clean dataset (.csv or .bin)")->required();
  grid_cmd->add_option("--out", gr.out, "Output directory; default $IDAC_OUTPUT_ROOT/grid");
  grid_cmd->add_option("--parallel", gr.parallel, "Concurrent runs (results do not depend on it)")->capture_default_str();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Recompute metrics from a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint.bin written by train")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset (.csv or .bin)")->required();
  eval_cmd->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--threshold", ev.threshold, "Decision threshold; default from the checkpoint");
  eval_cmd->add_option("--n-bootstrap", ev.n_bootstrap, "Bootstrap resamples; default from the checkpoint");
  eval_cmd->add_option("--seed", ev.seed, "Bootstrap seed; default from the checkpoint");
  eval_cmd->add_option("--threads", ev.threads, "Bootstrap worker threads")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Also write the metrics JSON here");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic loss gradients with finite differences");
  gc_cmd->add_option("--instances", gc.instances, "Random instances per loss")->capture_default_str();
  gc_cmd->add_option("--seed", gc.seed, "Instance seed")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  ctx.verbosity = quiet ? Verbosity::Quiet : (verbose ? Verbosity::Verbose : Verbosity::Normal);

  try {
    if (*gen_cmd) return cmd_gen_data(gen, ctx);
    if (*inj_cmd) return cmd_inject_noise(inj, ctx);
    if (*train_cmd) return cmd_train(tr, ctx);
    if (*grid_cmd) return cmd_grid(gr, ctx);
    if (*eval_cmd) return cmd_eval(ev, ctx);
    if (*gc_cmd) return cmd_gradcheck(gc, ctx);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error (io): " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"idac"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace idac::cli
