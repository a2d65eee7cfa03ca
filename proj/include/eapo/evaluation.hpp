#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eapo {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct EvalReport {
  double threshold = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double false_positive_rate = 0.0;
  std::optional<double> roc_auc;  // absent for single-class input
  ConfusionCounts counts;
};

struct IntensityBin {
  double lo = 0.0;  // log10 intensity, inclusive
  double hi = 0.0;  // exclusive
  std::size_t positive_count = 0;
  std::size_t detected_count = 0;
  std::optional<double> detection_rate;
};

struct IntensityBreakdown {
  double bin_width = 0.5;
  std::vector<IntensityBin> bins;

  std::vector<double> bin_edges() const;
  /// Bins as a delimited table: lo,hi,positive_count,detected_count,detection_rate.
  std::string to_table() const;
};

/// Mann-Whitney estimate: P(score of random positive > random negative),
/// ties counted one half. Computed from mid-ranks, exact.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// F1 = 2tp / (2tp + fp + fn), 0 when the denominator is 0.
double f1_from_counts(const ConfusionCounts& c);

ConfusionCounts confusion_at(std::span<const double> scores, std::span<const int> labels,
                             double threshold);

/// Candidate thresholds: midpoints between consecutive distinct scores plus
/// one sentinel just below the minimum and one just above the maximum.
std::vector<double> candidate_thresholds(std::span<const double> scores);

/// The F1-maximising candidate threshold; equal F1 resolves to the higher
/// threshold. Prediction rule is score >= threshold.
double select_threshold_pr(std::span<const double> scores, std::span<const int> labels);

EvalReport metrics_at_threshold(std::span<const double> scores, std::span<const int> labels,
                                double threshold);

/// Positive-class detection rate per log10-intensity bin. Bins have width
/// `bin_width`, are aligned to integer multiples of it, and cover the
/// observed range contiguously (empty bins have no rate).
IntensityBreakdown intensity_breakdown(std::span<const double> scores, std::span<const int> labels,
                                       std::span<const std::optional<double>> intensities,
                                       double threshold, double bin_width = 0.5);

/// Machine-parseable `key=value` report. `extra` lines are appended verbatim
/// in the order given.
std::string format_report(const EvalReport& r,
                          const std::vector<std::pair<std::string, std::string>>& extra = {});

}  // namespace eapo
