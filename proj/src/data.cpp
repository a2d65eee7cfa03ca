#include "eapo/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "eapo/error.hpp"

namespace eapo {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return cells;
}

std::optional<double> parse_double(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

std::string row_msg(const std::string& source, std::size_t row, const std::string& what) {
  return source + ": row " + std::to_string(row) + ": " + what;
}

}  // namespace

void validate_record(const Record& r, std::size_t dim, const std::string& where) {
  if (r.features.size() != dim) {
    throw DataError(where + ": expected " + std::to_string(dim) + " features, got " +
                    std::to_string(r.features.size()));
  }
  for (std::size_t i = 0; i < dim; ++i) {
    if (!std::isfinite(r.features[i])) {
      throw DataError(where + ": feature " + std::to_string(i) + " is not finite");
    }
  }
  if (r.label != 0 && r.label != 1) {
    throw DataError(where + ": label must be 0 or 1");
  }
  if (r.intensity) {
    if (!std::isfinite(*r.intensity) || *r.intensity < 0.0) {
      throw DataError(where + ": intensity must be finite and nonnegative");
    }
    if (r.label == 1 && *r.intensity <= 0.0) {
      throw DataError(where + ": positive record with nonpositive intensity");
    }
    if (r.label == 0 && *r.intensity != 0.0) {
      throw DataError(where + ": negative record carries an intensity");
    }
  }
}

std::vector<std::string> default_feature_names(std::size_t dim) {
  std::vector<std::string> names;
  names.reserve(dim);
  for (std::size_t i = 0; i < dim; ++i) names.push_back("x" + std::to_string(i));
  return names;
}

Dataset::Dataset(std::vector<Record> records, std::size_t dim,
                 std::vector<std::string> feature_names)
    : records_(std::move(records)), dim_(dim), feature_names_(std::move(feature_names)) {
  if (dim_ == 0) throw DataError("dataset dimension must be positive");
  if (feature_names_.empty()) feature_names_ = default_feature_names(dim_);
  if (feature_names_.size() != dim_) throw DataError("feature name count does not match dimension");
  for (std::size_t i = 0; i < records_.size(); ++i) {
    auto& r = records_[i];
    validate_record(r, dim_, "record " + std::to_string(i));
    if (r.index != i) throw DataError("record indices must be dense and ordered");
    // Zero intensity on a negative carries no information; normalize it away.
    if (r.label == 0) r.intensity.reset();
    positive_count_ += static_cast<std::size_t>(r.label);
  }
}

std::vector<std::vector<double>> Dataset::features() const {
  std::vector<std::vector<double>> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.features);
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.label);
  return out;
}

Dataset parse_table(const std::string& text, const TableSchema& schema, const std::string& source) {
  if (schema.feature_columns.empty()) throw InvalidArgument("schema names no feature columns");
  if (schema.label_column.has_value() == schema.dm_column.has_value()) {
    throw InvalidArgument("schema must name exactly one of a label column or a DM column");
  }

  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM

  auto header = split(line, schema.delimiter);
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(std::string(header[i]), i);
  auto locate = [&](const std::string& name) {
    auto it = column.find(name);
    if (it == column.end()) throw DataError(source + ": header lacks column '" + name + "'");
    return it->second;
  };

  std::vector<std::size_t> feature_pos;
  for (const auto& name : schema.feature_columns) feature_pos.push_back(locate(name));
  const bool use_dm = schema.dm_column.has_value();
  const std::size_t target_pos = locate(use_dm ? *schema.dm_column : *schema.label_column);

  std::vector<Record> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto cells = split(line, schema.delimiter);
    if (cells.size() != header.size()) {
      throw DataError(row_msg(source, row, "expected " + std::to_string(header.size()) +
                                               " cells, got " + std::to_string(cells.size())));
    }
    Record r;
    r.index = records.size();
    r.features.reserve(feature_pos.size());
    for (std::size_t f = 0; f < feature_pos.size(); ++f) {
      auto v = parse_double(cells[feature_pos[f]]);
      if (!v) {
        throw DataError(row_msg(source, row, "non-numeric value in column '" +
                                                 schema.feature_columns[f] + "'"));
      }
      if (!std::isfinite(*v)) {
        throw DataError(row_msg(source, row, "non-finite value in column '" +
                                                 schema.feature_columns[f] + "'"));
      }
      r.features.push_back(*v);
    }
    auto target = parse_double(cells[target_pos]);
    if (!target || !std::isfinite(*target)) {
      throw DataError(row_msg(source, row, use_dm ? "invalid DM value" : "invalid label value"));
    }
    if (use_dm) {
      if (*target < 0.0) throw DataError(row_msg(source, row, "negative DM value"));
      r.label = *target > 0.0 ? 1 : 0;
      if (r.label == 1) r.intensity = *target;
    } else {
      if (*target != 0.0 && *target != 1.0) {
        throw DataError(row_msg(source, row, "label must be 0 or 1"));
      }
      r.label = static_cast<int>(*target);
    }
    records.push_back(std::move(r));
  }
  return Dataset(std::move(records), schema.feature_columns.size(), schema.feature_columns);
}

Dataset load_table(const std::filesystem::path& path, const TableSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open table '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_table(buf.str(), schema, path.string());
}

namespace {

bool all_positives_have_intensity(std::span<const Record> records) {
  bool any_positive = false;
  for (const auto& r : records) {
    if (r.label == 1) {
      any_positive = true;
      if (!r.intensity) return false;
    }
  }
  return any_positive;
}

std::string format_rows(std::span<const Record> records, const std::vector<std::string>& names,
                        char delim, bool with_source_index) {
  const bool with_dm = all_positives_have_intensity(records);
  std::string out;
  if (with_source_index) out += "source_index" + std::string(1, delim);
  for (const auto& n : names) out += n + delim;
  out += "label";
  if (with_dm) out += std::string(1, delim) + "dm";
  out += '\n';
  for (const auto& r : records) {
    if (with_source_index) out += std::to_string(r.index) + delim;
    for (double v : r.features) out += format_double(v) + delim;
    out += std::to_string(r.label);
    if (with_dm) out += delim + format_double(r.intensity.value_or(0.0));
    out += '\n';
  }
  return out;
}

}  // namespace

std::string format_table(const Dataset& ds, char delimiter) {
  return format_rows(ds.records(), ds.feature_names(), delimiter, false);
}

void export_table(const Dataset& ds, const std::filesystem::path& path, char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write table '" + path.string() + "'");
  out << format_table(ds, delimiter);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

TableSchema export_schema(const Dataset& ds, char delimiter) {
  TableSchema s;
  s.feature_columns = ds.feature_names();
  s.delimiter = delimiter;
  if (all_positives_have_intensity(ds.records())) {
    s.dm_column = "dm";
  } else {
    s.label_column = "label";
  }
  return s;
}

std::string format_audit_table(std::span<const Record> records,
                               const std::vector<std::string>& feature_names, char delimiter) {
  return format_rows(records, feature_names, delimiter, true);
}

Standardizer fit_standardizer(const Dataset& train) {
  if (train.empty()) throw InvalidArgument("cannot fit a standardizer on an empty dataset");
  const std::size_t d = train.dim();
  const double n = static_cast<double>(train.size());
  Standardizer s;
  s.means.assign(d, 0.0);
  s.stds.assign(d, 0.0);
  s.constant_mask.assign(d, false);
  for (const auto& r : train.records()) {
    for (std::size_t i = 0; i < d; ++i) s.means[i] += r.features[i];
  }
  for (auto& m : s.means) m /= n;
  // Two-pass variance; a column whose values are all equal gives exactly 0.
  for (const auto& r : train.records()) {
    for (std::size_t i = 0; i < d; ++i) {
      const double dev = r.features[i] - s.means[i];
      s.stds[i] += dev * dev;
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    s.stds[i] = std::sqrt(s.stds[i] / n);
    s.constant_mask[i] = s.stds[i] == 0.0;
  }
  return s;
}

std::vector<double> apply_standardizer(const Standardizer& s, std::span<const double> x) {
  if (x.size() != s.dim()) throw InvalidArgument("standardizer dimension mismatch");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = s.constant_mask[i] ? 0.0 : (x[i] - s.means[i]) / s.stds[i];
  }
  return out;
}

Dataset apply_standardizer(const Standardizer& s, const Dataset& ds) {
  if (ds.dim() != s.dim()) throw InvalidArgument("standardizer dimension mismatch");
  std::vector<Record> out = ds.records();
  for (auto& r : out) r.features = apply_standardizer(s, r.features);
  return Dataset(std::move(out), ds.dim(), ds.feature_names());
}

void SyntheticConfig::validate() const {
  if (dim == 0) throw InvalidArgument("synthetic dim must be positive");
  if (n_train == 0 || n_test == 0) throw InvalidArgument("synthetic sizes must be positive");
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) {
    throw InvalidArgument("positive_rate must lie strictly between 0 and 1");
  }
  if (!(shift_magnitude >= 0.0) || !std::isfinite(shift_magnitude)) {
    throw InvalidArgument("shift_magnitude must be finite and nonnegative");
  }
  if (!(class_separation > 0.0) || !std::isfinite(class_separation)) {
    throw InvalidArgument("class_separation must be positive");
  }
  if (!std::isfinite(intensity_log_mean) || !(intensity_log_std >= 0.0) ||
      !std::isfinite(intensity_log_std) || !std::isfinite(intensity_margin_coupling)) {
    throw InvalidArgument("intensity parameters must be finite, with nonnegative spread");
  }
}

namespace {

// Independent streams per purpose so that changing one parameter never
// perturbs draws made for another.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

std::vector<double> unit_direction(std::size_t dim, std::uint64_t seed) {
  auto rng = stream(seed, 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> dir(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& v : dir) {
      v = normal(rng);
      norm += v * v;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& v : dir) v /= norm;
  return dir;
}

std::vector<Record> draw_split(const SyntheticConfig& cfg, std::size_t n, std::uint64_t purpose,
                               std::span<const double> shift) {
  auto rng = stream(cfg.seed, purpose);
  std::bernoulli_distribution is_positive(cfg.positive_rate);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Record> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = records[i];
    r.index = i;
    r.label = is_positive(rng) ? 1 : 0;
    r.features.resize(cfg.dim);
    for (auto& v : r.features) v = normal(rng);
    // The intensity noise is drawn for every record to keep the stream
    // layout independent of the label sequence.
    const double noise = normal(rng);
    if (r.label == 1) {
      const double axis_offset = r.features[0];
      r.features[0] += cfg.class_separation;
      r.intensity = std::exp(cfg.intensity_log_mean + cfg.intensity_margin_coupling * axis_offset +
                             cfg.intensity_log_std * noise);
    }
    for (std::size_t j = 0; j < cfg.dim; ++j) r.features[j] += shift[j];
  }
  return records;
}

}  // namespace

std::vector<double> synthetic_shift_vector(const SyntheticConfig& cfg) {
  cfg.validate();
  auto dir = unit_direction(cfg.dim, cfg.seed);
  for (auto& v : dir) v *= cfg.shift_magnitude;
  return dir;
}

std::pair<Dataset, Dataset> generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::vector<double> no_shift(cfg.dim, 0.0);
  const auto shift = synthetic_shift_vector(cfg);
  Dataset train(draw_split(cfg, cfg.n_train, 1, no_shift), cfg.dim);
  Dataset test(draw_split(cfg, cfg.n_test, 2, shift), cfg.dim);
  return {std::move(train), std::move(test)};
}

}  // namespace eapo
