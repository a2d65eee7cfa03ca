#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace eapo {

/// One observation: a feature vector, a binary label and, for positives, the
/// fire intensity (dry matter consumed) that produced the label.
struct Record {
  std::vector<double> features;
  int label = 0;
  std::optional<double> intensity;
  std::size_t index = 0;

  bool operator==(const Record&) const = default;
};

/// Immutable, validated collection of records sharing one feature dimension.
///
/// Construction checks every record invariant (finite features, binary label,
/// intensity only on positives) and that indices are dense in [0, n).
class Dataset {
public:
  Dataset() = default;
  Dataset(std::vector<Record> records, std::size_t dim,
          std::vector<std::string> feature_names = {});

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t positive_count() const { return positive_count_; }
  const std::vector<Record>& records() const { return records_; }
  const Record& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  std::vector<std::vector<double>> features() const;
  std::vector<int> labels() const;

  bool operator==(const Dataset&) const = default;

private:
  std::vector<Record> records_;
  std::size_t dim_ = 0;
  std::size_t positive_count_ = 0;
  std::vector<std::string> feature_names_;
};

/// Checks the per-record invariants; throws DataError naming `where`.
void validate_record(const Record& r, std::size_t dim, const std::string& where);

std::vector<std::string> default_feature_names(std::size_t dim);

/// Column roles for a delimited table. Exactly one of label_column and
/// dm_column must be set. Columns not named here are ignored.
struct TableSchema {
  std::vector<std::string> feature_columns;
  std::optional<std::string> label_column;
  std::optional<std::string> dm_column;
  char delimiter = ',';
};

/// Loads a header-first delimited table. With a DM column, label is 1 iff
/// DM > 0 and the DM value becomes the record intensity. Row numbers in
/// error messages are 1-based data rows (the header is row 0).
Dataset load_table(const std::filesystem::path& path, const TableSchema& schema);
Dataset parse_table(const std::string& text, const TableSchema& schema,
                    const std::string& source = "<memory>");

/// Writes features, then `label`, then `dm` when every positive carries an
/// intensity (dm = 0 for negatives). Doubles use the shortest round-trip form.
std::string format_table(const Dataset& ds, char delimiter = ',');
void export_table(const Dataset& ds, const std::filesystem::path& path, char delimiter = ',');

/// Schema that reads back what export_table wrote for `ds`.
TableSchema export_schema(const Dataset& ds, char delimiter = ',');

/// Same as format_table over a subset of records (indices need not be dense)
/// with a leading `source_index` column.
std::string format_audit_table(std::span<const Record> records,
                               const std::vector<std::string>& feature_names,
                               char delimiter = ',');

struct Standardizer {
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<bool> constant_mask;

  std::size_t dim() const { return means.size(); }
  bool operator==(const Standardizer&) const = default;
};

/// Per-feature population mean and standard deviation.
Standardizer fit_standardizer(const Dataset& train);
Dataset apply_standardizer(const Standardizer& s, const Dataset& ds);
std::vector<double> apply_standardizer(const Standardizer& s, std::span<const double> x);

struct SyntheticConfig {
  std::size_t dim = 12;
  std::size_t n_train = 20000;
  std::size_t n_test = 5000;
  double positive_rate = 0.05;
  double shift_magnitude = 2.0;
  double class_separation = 2.0;
  double intensity_log_mean = 18.4;  // natural log, about 1e8 mass units
  double intensity_log_std = 1.0;
  // Adds coupling * (signed offset of the positive along the class axis)
  // to the log intensity. 0 gives the plain log-normal draw.
  double intensity_margin_coupling = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Two isotropic unit-variance Gaussian classes, negatives at the origin and
/// positives `class_separation` along the first axis. Test features are
/// translated by a seed-determined vector of norm `shift_magnitude`. The
/// random stream does not depend on shift_magnitude, so two configs that
/// differ only there produce record-wise translated test sets.
std::pair<Dataset, Dataset> generate_synthetic(const SyntheticConfig& cfg);

/// The translation generate_synthetic applies to test features.
std::vector<double> synthetic_shift_vector(const SyntheticConfig& cfg);

}  // namespace eapo
