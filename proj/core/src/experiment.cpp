#include "idac/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "idac/error.hpp"
#include "idac/losses.hpp"
#include "idac/optim.hpp"

namespace idac {

nlohmann::json to_json(const EpochRecord& r) {
  auto optional = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"epoch", r.epoch},
          {"phase", r.warmup ? "warmup" : "train"},
          {"train_loss", r.train_loss},
          {"eta_hat", optional(r.eta_hat)},
          {"abstain_rate", optional(r.abstain_rate)},
          {"lr", r.lr},
          {"alpha", r.alpha},
          {"val_auroc", r.val_auroc}};
}

MlpSpec resolve_model_spec(const TrainConfig& config, const Dataset& dataset) {
  MlpSpec spec = config.model;
  if (spec.input_dim == 0) spec.input_dim = dataset.dim();
  if (spec.num_classes == 0) spec.num_classes = dataset.num_classes;
  if (spec.input_dim != dataset.dim()) {
    fail(ErrorKind::InvalidConfig,
         fmt::format("model.input_dim {} does not match the dataset's {} features", spec.input_dim, dataset.dim()));
  }
  if (spec.num_classes != dataset.num_classes) {
    fail(ErrorKind::InvalidConfig, fmt::format("model.num_classes {} does not match the dataset's {} classes",
                                               spec.num_classes, dataset.num_classes));
  }
  spec.abstain_head = has_abstention(config.loss.kind);
  spec.validate();
  return spec;
}

std::uint64_t bootstrap_seed(std::uint64_t seed) { return substream(Rng(seed), Stream::Bootstrap).next_u64(); }

std::vector<double> positive_scores(const MlpState& state, const Matrix& features) {
  const Matrix probs = inference_probs(predict_logits(state, features), state.spec.num_classes);
  std::vector<double> scores(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) scores[r] = probs(r, 1);
  return scores;
}

MetricsReport evaluate_model(const MlpState& state, const Dataset& dataset, Split split, const EvalSettings& settings) {
  const Batch part = select_split(dataset, split);
  const auto scores = positive_scores(state, part.features);
  return evaluate_scores(scores, part.labels, settings);
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  out << text;
}

}  // namespace

nlohmann::json summary_json(const ExperimentResult& r) {
  nlohmann::json j;
  j["run_id"] = r.run_id;
  j["config"] = to_json(r.config);
  j["eta_tilde"] = r.eta_tilde ? nlohmann::json(*r.eta_tilde) : nlohmann::json(nullptr);
  j["epochs"] = r.epochs.size();
  j["selected_epoch"] = r.selected_epoch;
  j["selected_val_auroc"] = r.selected_val_auroc;
  j["test"] = r.test ? to_json(*r.test) : nlohmann::json(nullptr);
  j["test_auroc_cell"] =
      r.test ? nlohmann::json(format_point_ci(r.test->auroc, r.test->auroc_ci_low, r.test->auroc_ci_high))
             : nlohmann::json(nullptr);
  j["final_epoch_test_auroc"] = r.final_epoch_test_auroc ? nlohmann::json(*r.final_epoch_test_auroc) : nlohmann::json(nullptr);
  j["failure"] = r.failure ? nlohmann::json{{"epoch", r.failure->epoch}, {"message", r.failure->message}}
                           : nlohmann::json(nullptr);
  j["noise"] = r.noise ? nlohmann::json{{"rate", r.noise->rate},
                                        {"seed", r.noise->seed},
                                        {"flip_count", r.noise->flipped_indices.size()},
                                        {"record", "noise_record.json"}}
                       : nlohmann::json(nullptr);
  j["checkpoint"] = "checkpoint.bin";
  return j;
}

ExperimentResult run(const TrainConfig& config, const Dataset& dataset, const RunOptions& options) {
  config.validate();
  dataset.validate(true);
  if (dataset.num_classes != 2) fail(ErrorKind::InvalidConfig, "experiment evaluation needs a binary dataset");

  ExperimentResult result;
  result.run_id = options.run_id;
  result.config = config;

  Dataset data = dataset;
  double injected_rate = 0.0;
  if (config.noise) {
    auto noisy = inject_noise(dataset, config.noise->rate, config.noise->seed);
    data = std::move(noisy.dataset);
    result.noise = std::move(noisy.record);
    injected_rate = config.noise->rate;
  }

  LossSpec loss = config.loss;
  if (loss.kind == LossKind::IDAC) {
    loss.eta_tilde = resolve_eta_tilde(config.eta_tilde_policy, injected_rate);
    result.eta_tilde = loss.eta_tilde;
    result.config.loss.eta_tilde = loss.eta_tilde;
  }
  loss.validate();
  const bool abstaining = has_abstention(loss.kind);

  const MlpSpec spec = resolve_model_spec(config, data);
  result.config.model.input_dim = spec.input_dim;
  result.config.model.num_classes = spec.num_classes;

  const Rng root(config.seed);
  MlpState state = init_mlp(spec, substream(root, Stream::Init));
  BatchIterator iterator;
  iterator.batch_size = config.batch_size;
  iterator.seed = substream(root, Stream::Shuffle).next_u64();

  const Batch val = select_split(data, Split::Val);
  const DacSchedule schedule{config.warmup_epochs, config.total_epochs, loss.alpha.value_or(0.0)};

  std::ofstream epochs_out;
  std::ofstream timings_out;
  if (options.output_dir) {
    std::filesystem::create_directories(*options.output_dir);
    epochs_out.open(*options.output_dir / "epochs.jsonl", std::ios::trunc);
    timings_out.open(*options.output_dir / "timings.jsonl", std::ios::trunc);
    if (!epochs_out || !timings_out) {
      fail(ErrorKind::Io, fmt::format("cannot write into '{}'", options.output_dir->string()));
    }
  }

  for (int epoch = 0; epoch < config.total_epochs && !result.failure; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.warmup = abstaining && epoch < config.warmup_epochs;
    rec.lr = lr_at(epoch, config.optim);
    if (loss.kind == LossKind::DAC) {
      rec.alpha = dac_alpha_at(epoch, schedule);
    } else if (loss.kind == LossKind::IDAC && !rec.warmup) {
      rec.alpha = *loss.alpha;
    }

    double loss_sum = 0.0;
    double eta_sum = 0.0;
    double rate_sum = 0.0;
    std::size_t n_batches = 0;
    for (const Batch& batch : batches(data, Split::Train, iterator, epoch)) {
      const auto fwd = forward(state, batch.features);
      if (!fwd.logits.all_finite()) {
        result.failure = RunFailure{epoch, "non-finite logits"};
        break;
      }
      const auto batch_loss = rec.warmup ? warmup_ce_loss(fwd.logits, batch.labels)
                                         : compute_loss(loss, fwd.logits, batch.labels, rec.alpha);
      if (!std::isfinite(batch_loss.loss)) {
        result.failure = RunFailure{epoch, "non-finite training loss"};
        break;
      }
      try {
        sgd_step(state, backward(state, fwd.cache, batch_loss.grad_logits), rec.lr, config.optim);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::TrainingDiverged) throw;
        result.failure = RunFailure{epoch, e.what()};
        break;
      }
      loss_sum += batch_loss.loss;
      eta_sum += batch_loss.eta_hat.value_or(0.0);
      rate_sum += batch_loss.abstain_rate_argmax;
      ++n_batches;
    }
    if (result.failure) break;

    const Matrix val_logits = predict_logits(state, val.features);
    if (!val_logits.all_finite()) {
      result.failure = RunFailure{epoch, "non-finite validation logits"};
      break;
    }
    const Matrix val_probs = inference_probs(val_logits, spec.num_classes);
    std::vector<double> val_scores(val_probs.rows());
    for (std::size_t r = 0; r < val_probs.rows(); ++r) val_scores[r] = val_probs(r, 1);
    rec.train_loss = loss_sum / static_cast<double>(n_batches);
    if (abstaining) {
      rec.eta_hat = eta_sum / static_cast<double>(n_batches);
      rec.abstain_rate = rate_sum / static_cast<double>(n_batches);
    }
    rec.val_auroc = auroc(val_scores, val.labels);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    if (result.selected_epoch < 0 || rec.val_auroc > result.selected_val_auroc) {
      result.selected_epoch = epoch;
      result.selected_val_auroc = rec.val_auroc;
      result.selected_state = state;
    }
    if (epochs_out.is_open()) {
      epochs_out << to_json(rec).dump() << '\n';
      epochs_out.flush();
      timings_out << nlohmann::json{{"epoch", epoch}, {"wall_time_s", rec.wall_time_s}}.dump() << '\n';
    }
    if (options.on_epoch) options.on_epoch(rec);
    result.epochs.push_back(rec);
  }
  result.final_state = std::move(state);

  const EvalSettings settings{config.eval.threshold, config.eval.n_bootstrap, bootstrap_seed(config.seed),
                              options.eval_threads};
  if (result.selected_epoch >= 0) result.test = evaluate_model(result.selected_state, data, Split::Test, settings);
  if (!result.failure) {
    const Batch test = select_split(data, Split::Test);
    result.final_epoch_test_auroc = auroc(positive_scores(result.final_state, test.features), test.labels);
  }

  if (options.output_dir) {
    const auto& dir = *options.output_dir;
    write_text(dir / "summary.json", summary_json(result).dump(2) + "\n");
    if (result.selected_epoch >= 0) {
      CheckpointMeta meta;
      meta.seed = config.seed;
      meta.epoch = result.selected_epoch;
      meta.extra = {{"run_id", result.run_id},
                    {"loss", std::string(to_string(loss.kind))},
                    {"threshold", settings.threshold},
                    {"n_bootstrap", settings.n_bootstrap},
                    {"bootstrap_seed", settings.seed}};
      save_checkpoint(dir / "checkpoint.bin", result.selected_state, meta);
    }
    if (result.noise) save_noise_record(*result.noise, dir / "noise_record.json");
  }
  return result;
}

// ---------------------------------------------------------------------------
// grid search

std::size_t GridSpec::size() const {
  std::size_t n = 1;
  for (const auto& axis : axes) n *= axis.values.size();
  return n;
}

GridSpec grid_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.empty()) fail(ErrorKind::Schema, "grid must be a non-empty object of key -> [values]");
  GridSpec grid;
  for (const auto& item : j.items()) {
    if (!item.value().is_array() || item.value().empty()) {
      fail(ErrorKind::Schema, fmt::format("grid axis '{}' must be a non-empty array", item.key()));
    }
    GridAxis axis{item.key(), {}};
    for (const auto& v : item.value()) axis.values.push_back(v);
    grid.axes.push_back(std::move(axis));
  }
  return grid;
}

std::vector<GridPoint> enumerate_grid(const GridSpec& grid) {
  std::vector<GridPoint> points{GridPoint{}};
  for (const auto& axis : grid.axes) {
    std::vector<GridPoint> next;
    for (const auto& partial : points) {
      for (const auto& value : axis.values) {
        GridPoint p = partial;
        p.emplace_back(axis.key, value);
        next.push_back(std::move(p));
      }
    }
    points = std::move(next);
  }
  return points;
}

std::string grid_point_label(const GridPoint& point) {
  std::string label;
  for (const auto& [key, value] : point) {
    if (!label.empty()) label += ',';
    label += key + "=" + (value.is_string() ? value.get<std::string>() : value.dump());
  }
  return label.empty() ? "base" : label;
}

namespace {

std::string directory_name(const std::string& label) {
  std::string out;
  for (char c : label) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '=' || c == '_';
    if (c == ',') {
      out += "__";
    } else {
      out += keep ? c : '_';
    }
  }
  return out;
}

int status_rank(const GridEntry& e) {
  if (e.error) return 2;
  if (e.result->failure) return 1;
  return 0;
}

}  // namespace

std::vector<GridEntry> grid_search(const nlohmann::json& base_config, const GridSpec& grid, const Dataset& dataset,
                                   const GridOptions& options) {
  const auto points = enumerate_grid(grid);
  std::vector<GridEntry> entries(points.size());
  std::mutex callback_mutex;

  auto run_point = [&](std::size_t i) {
    GridEntry& entry = entries[i];
    entry.index = i;
    entry.point = points[i];
    const std::string label = grid_point_label(points[i]);
    try {
      nlohmann::json cfg = base_config;
      for (const auto& [key, value] : points[i]) apply_override(cfg, key, value);
      const TrainConfig config = train_config_from_json(cfg);
      RunOptions run_options;
      run_options.run_id = label;
      if (options.output_dir) run_options.output_dir = *options.output_dir / directory_name(label);
      entry.result = run(config, dataset, run_options);
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    if (options.on_done) {
      std::lock_guard lock(callback_mutex);
      options.on_done(entry);
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.parallel, static_cast<unsigned>(points.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < points.size(); ++i) run_point(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < points.size(); i = next++) run_point(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::stable_sort(entries.begin(), entries.end(), [](const GridEntry& a, const GridEntry& b) {
    const int ra = status_rank(a);
    const int rb = status_rank(b);
    if (ra != rb) return ra < rb;
    if (ra < 2 && a.result->selected_val_auroc != b.result->selected_val_auroc) {
      return a.result->selected_val_auroc > b.result->selected_val_auroc;
    }
    return a.index < b.index;
  });

  if (options.output_dir) {
    std::filesystem::create_directories(*options.output_dir);
    write_text(*options.output_dir / "grid_results.json", grid_results_json(entries).dump(2) + "\n");
    write_text(*options.output_dir / "grid_table.txt", render_grid_table(entries));
  }
  return entries;
}

nlohmann::json grid_results_json(const std::vector<GridEntry>& ranked) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
    const auto& e = ranked[rank];
    nlohmann::json point = nlohmann::json::object();
    for (const auto& [key, value] : e.point) point[key] = value;
    nlohmann::json row = {{"rank", rank + 1},
                          {"index", e.index},
                          {"label", grid_point_label(e.point)},
                          {"point", point},
                          {"status", e.error ? "error" : (e.result->failure ? "diverged" : "ok")},
                          {"error", e.error ? nlohmann::json(*e.error) : nlohmann::json(nullptr)}};
    if (e.result) {
      const auto summary = summary_json(*e.result);
      for (const char* key : {"selected_epoch", "selected_val_auroc", "test", "test_auroc_cell",
                              "final_epoch_test_auroc", "failure", "eta_tilde"}) {
        row[key] = summary[key];
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_grid_table(const std::vector<GridEntry>& ranked) {
  std::vector<std::vector<std::string>> cells{{"Rank", "Point", "Val AUROC", "Epoch", "Test AUROC [95% CI]", "Status"}};
  for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
    const auto& e = ranked[rank];
    std::vector<std::string> row{std::to_string(rank + 1), grid_point_label(e.point)};
    if (e.result) {
      row.push_back(fmt::format("{:.1f}", 100.0 * e.result->selected_val_auroc));
      row.push_back(std::to_string(e.result->selected_epoch));
      row.push_back(e.result->test
                        ? format_point_ci(e.result->test->auroc, e.result->test->auroc_ci_low, e.result->test->auroc_ci_high)
                        : "-");
      row.push_back(e.result->failure ? fmt::format("diverged@{}", e.result->failure->epoch) : "ok");
    } else {
      row.insert(row.end(), {"-", "-", "-", "error"});
    }
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (c > 0) line += "  ";
      line += (c == 1) ? fmt::format("{:<{}}", cells[r][c], width[c]) : fmt::format("{:>{}}", cells[r][c], width[c]);
    }
    out += line + '\n';
    if (r == 0) out += std::string(line.size(), '-') + '\n';
  }
  for (const auto& e : ranked) {
    if (e.error) out += fmt::format("error in {}: {}\n", grid_point_label(e.point), *e.error);
  }
  return out;
}

}  // namespace idac
