#include "idac/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "idac/error.hpp"

namespace idac {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val" || text == "validation") return Split::Val;
  if (text == "test") return Split::Test;
  fail(ErrorKind::Parse, fmt::format("unknown split tag '{}'", text));
}

std::size_t Dataset::count(Split s) const {
  return static_cast<std::size_t>(std::count(split.begin(), split.end(), s));
}

std::vector<std::size_t> Dataset::rows_of(Split s) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) rows.push_back(i);
  }
  return rows;
}

void Dataset::validate(bool require_all_splits) const {
  if (features.rows() != labels.size() || split.size() != labels.size()) {
    fail(ErrorKind::Shape, "features, labels and split tags disagree on row count");
  }
  if (!feature_names.empty() && feature_names.size() != features.cols()) {
    fail(ErrorKind::Shape, "feature name count does not match feature columns");
  }
  if (num_classes < 2) fail(ErrorKind::InvalidConfig, "dataset needs at least two classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      fail(ErrorKind::InvalidLabel, fmt::format("row {}: label {} outside [0, {})", i, labels[i], num_classes));
    }
  }
  if (!features.all_finite()) fail(ErrorKind::InvalidInput, "non-finite feature value");
  if (require_all_splits) {
    for (Split s : {Split::Train, Split::Val, Split::Test}) {
      if (count(s) == 0) fail(ErrorKind::InvalidInput, fmt::format("split '{}' is empty", to_string(s)));
    }
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

bool parse_double(std::string_view text, double& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size() && !text.empty();
}

bool parse_label(std::string_view text, int& out) {
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec == std::errc{} && ptr == text.data() + text.size() && !text.empty()) return true;
  double value = 0.0;
  if (parse_double(text, value) && std::floor(value) == value && std::abs(value) < 1e9) {
    out = static_cast<int>(value);
    return true;
  }
  return false;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) fail(ErrorKind::Parse, fmt::format("'{}': missing header", path.string()));

  std::vector<std::string> header;
  for (auto f : split_fields(line)) header.emplace_back(f);
  auto column_of = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };

  const auto label_col = column_of(schema.label_column);
  if (!label_col) fail(ErrorKind::Schema, fmt::format("missing label column '{}'", schema.label_column));
  const auto split_col = column_of(schema.split_column);
  if (!split_col && !schema.split_optional) {
    fail(ErrorKind::Schema, fmt::format("missing split column '{}'", schema.split_column));
  }

  std::vector<std::size_t> feature_cols;
  Dataset ds;
  if (schema.feature_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != *label_col && (!split_col || c != *split_col)) {
        feature_cols.push_back(c);
        ds.feature_names.push_back(header[c]);
      }
    }
  } else {
    for (const auto& name : schema.feature_columns) {
      const auto c = column_of(name);
      if (!c) fail(ErrorKind::Schema, fmt::format("missing feature column '{}'", name));
      feature_cols.push_back(*c);
      ds.feature_names.push_back(name);
    }
  }
  if (feature_cols.empty()) fail(ErrorKind::Schema, "no feature columns");

  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      fail(ErrorKind::Parse, fmt::format("{}:{}: expected {} fields, found {}", path.string(), line_no, header.size(),
                                         fields.size()));
    }
    for (std::size_t c : feature_cols) {
      double v = 0.0;
      if (!parse_double(fields[c], v) || !std::isfinite(v)) {
        fail(ErrorKind::Parse, fmt::format("{}:{}: bad feature value '{}' in column '{}'", path.string(), line_no,
                                           fields[c], header[c]));
      }
      values.push_back(v);
    }
    int label = 0;
    if (!parse_label(fields[*label_col], label)) {
      fail(ErrorKind::Parse,
           fmt::format("{}:{}: label '{}' is not an integer", path.string(), line_no, fields[*label_col]));
    }
    if (label < 0 || (schema.num_classes && static_cast<std::size_t>(label) >= *schema.num_classes)) {
      fail(ErrorKind::InvalidLabel, fmt::format("{}:{}: unknown label {}", path.string(), line_no, label));
    }
    ds.labels.push_back(label);
    if (split_col) {
      try {
        ds.split.push_back(parse_split(fields[*split_col]));
      } catch (const Error&) {
        fail(ErrorKind::Parse,
             fmt::format("{}:{}: unknown split tag '{}'", path.string(), line_no, fields[*split_col]));
      }
    } else {
      ds.split.push_back(Split::Train);
    }
  }

  ds.features = Matrix(ds.labels.size(), feature_cols.size(), std::move(values));
  if (schema.num_classes) {
    ds.num_classes = *schema.num_classes;
  } else {
    const int max_label = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end());
    ds.num_classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
  }
  ds.provenance = "csv:" + path.filename().string();
  ds.validate();
  return ds;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  std::string text;
  for (std::size_t c = 0; c < dataset.dim(); ++c) {
    text += dataset.feature_names.empty() ? fmt::format("x{}", c) : dataset.feature_names[c];
    text += ',';
  }
  text += "label,split\n";
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    for (double v : dataset.features.row(r)) {
      text += format_double(v);
      text += ',';
    }
    text += std::to_string(dataset.labels[r]);
    text += ',';
    text += to_string(dataset.split[r]);
    text += '\n';
  }
  out << text;
  if (!out) fail(ErrorKind::Io, fmt::format("failed writing '{}'", path.string()));
}

// ---------------------------------------------------------------------------
// binary

namespace {
constexpr std::string_view kDatasetMagic = "IDACDS01";
}

void save_binary(const Dataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  const nlohmann::json header = {
      {"format", "idac-dataset"},
      {"version", 1},
      {"n", dataset.size()},
      {"d", dataset.dim()},
      {"k", dataset.num_classes},
      {"splits",
       {{"train", dataset.count(Split::Train)}, {"val", dataset.count(Split::Val)}, {"test", dataset.count(Split::Test)}}},
      {"feature_names", dataset.feature_names},
      {"provenance", dataset.provenance}};
  detail::write_header(out, kDatasetMagic, header.dump());
  detail::write_doubles(out, dataset.features.values());
  for (int label : dataset.labels) detail::write_i32(out, label);
  for (Split s : dataset.split) detail::write_i32(out, static_cast<std::int32_t>(s));
  if (!out) fail(ErrorKind::Io, fmt::format("failed writing '{}'", path.string()));
}

Dataset load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(detail::read_header(in, kDatasetMagic));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, fmt::format("dataset header: {}", e.what()));
  }
  Dataset ds;
  const auto n = header.at("n").get<std::size_t>();
  const auto d = header.at("d").get<std::size_t>();
  ds.num_classes = header.at("k").get<std::size_t>();
  ds.feature_names = header.value("feature_names", std::vector<std::string>{});
  ds.provenance = header.value("provenance", std::string{});
  std::vector<double> values(n * d);
  detail::read_doubles(in, values);
  ds.features = Matrix(n, d, std::move(values));
  ds.labels.resize(n);
  for (int& label : ds.labels) label = detail::read_i32(in);
  ds.split.resize(n);
  for (Split& s : ds.split) {
    const auto tag = detail::read_i32(in);
    if (tag < 0 || tag > 2) fail(ErrorKind::Parse, "bad split tag in binary dataset");
    s = static_cast<Split>(tag);
  }
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  return path.extension() == ".bin" ? load_binary(path) : load_csv(path);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  if (path.extension() == ".bin") {
    save_binary(dataset, path);
  } else {
    save_csv(dataset, path);
  }
}

// ---------------------------------------------------------------------------
// synthetic

std::string_view to_string(SyntheticKind kind) {
  return kind == SyntheticKind::TwoGaussians ? "two_gaussians" : "two_moons";
}

SyntheticKind parse_synthetic_kind(std::string_view text) {
  if (text == "two_gaussians") return SyntheticKind::TwoGaussians;
  if (text == "two_moons") return SyntheticKind::TwoMoons;
  fail(ErrorKind::InvalidConfig, fmt::format("unknown synthetic kind '{}'", text));
}

std::vector<double> SyntheticParams::resolved_mean() const {
  if (!mean.empty()) {
    if (mean.size() != dim) fail(ErrorKind::InvalidConfig, "mean vector length must equal dim");
    return mean;
  }
  std::vector<double> m(dim, 0.0);
  if (dim > 0) m[0] = mu;
  return m;
}

nlohmann::json to_json(const SyntheticParams& params) {
  return {{"dim", params.dim},
          {"mean", params.resolved_mean()},
          {"sigma", params.sigma},
          {"moon_noise", params.moon_noise}};
}

double two_gaussians_bayes_auroc(const SyntheticParams& params) {
  double norm2 = 0.0;
  for (double v : params.resolved_mean()) norm2 += v * v;
  const double x = std::sqrt(2.0 * norm2) / params.sigma;
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

Dataset gen_synthetic(SyntheticKind kind, const SplitSizes& sizes, const SyntheticParams& params, std::uint64_t seed) {
  if (params.dim < 2 && kind == SyntheticKind::TwoMoons) fail(ErrorKind::InvalidConfig, "two_moons needs dim >= 2");
  if (params.dim < 1) fail(ErrorKind::InvalidConfig, "dim must be >= 1");
  if (!(params.sigma >= 0.0)) fail(ErrorKind::InvalidConfig, "sigma must be >= 0");
  const auto mean = params.resolved_mean();
  const std::size_t total = sizes.train + sizes.val + sizes.test;

  Dataset ds;
  ds.num_classes = 2;
  ds.features = Matrix(total, params.dim);
  ds.labels.reserve(total);
  ds.split.reserve(total);
  for (std::size_t c = 0; c < params.dim; ++c) ds.feature_names.push_back(fmt::format("x{}", c));
  ds.provenance = fmt::format("synthetic:{} seed={}", to_string(kind), seed);

  const Rng root(seed);
  std::size_t row = 0;
  const std::pair<Split, std::size_t> parts[] = {{Split::Train, sizes.train}, {Split::Val, sizes.val}, {Split::Test, sizes.test}};
  for (const auto& [split, n] : parts) {
    Rng rng = root.substream(static_cast<std::uint64_t>(split) + 1);
    for (std::size_t i = 0; i < n; ++i, ++row) {
      const int label = static_cast<int>(i % 2);
      auto x = ds.features.row(row);
      if (kind == SyntheticKind::TwoGaussians) {
        const double sign = label == 1 ? 1.0 : -1.0;
        for (std::size_t c = 0; c < params.dim; ++c) x[c] = sign * mean[c] + params.sigma * rng.normal();
      } else {
        const double t = std::numbers::pi * rng.uniform();
        if (label == 0) {
          x[0] = std::cos(t);
          x[1] = std::sin(t);
        } else {
          x[0] = 1.0 - std::cos(t);
          x[1] = 0.5 - std::sin(t);
        }
        for (std::size_t c = 0; c < params.dim; ++c) x[c] += params.moon_noise * rng.normal();
      }
      ds.labels.push_back(label);
      ds.split.push_back(split);
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// batching

std::vector<Batch> batches(const Dataset& dataset, Split split, const BatchIterator& iterator, int epoch) {
  if (iterator.batch_size < 1) fail(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  auto rows = dataset.rows_of(split);
  if (rows.empty()) fail(ErrorKind::InvalidInput, fmt::format("split '{}' is empty", to_string(split)));
  if (iterator.shuffle) {
    Rng rng = Rng(iterator.seed).substream(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = rows.size() - 1; i > 0; --i) std::swap(rows[i], rows[rng.below(i + 1)]);
  }
  std::vector<Batch> out;
  const std::size_t d = dataset.dim();
  for (std::size_t start = 0; start < rows.size(); start += iterator.batch_size) {
    const std::size_t end = std::min(rows.size(), start + iterator.batch_size);
    if (iterator.drop_last && end - start < iterator.batch_size && !out.empty()) break;
    Batch b;
    b.features = Matrix(end - start, d);
    for (std::size_t i = start; i < end; ++i) {
      const auto src = dataset.features.row(rows[i]);
      std::copy(src.begin(), src.end(), b.features.row(i - start).begin());
      b.labels.push_back(dataset.labels[rows[i]]);
      b.rows.push_back(rows[i]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

Batch select_split(const Dataset& dataset, Split split) {
  BatchIterator all;
  all.batch_size = std::max<std::size_t>(1, dataset.count(split));
  all.shuffle = false;
  auto parts = batches(dataset, split, all, 0);
  return std::move(parts.front());
}

}  // namespace idac
