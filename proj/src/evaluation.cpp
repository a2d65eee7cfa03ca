#include "eapo/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "eapo/error.hpp"

namespace eapo {

namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
  for (int y : labels) {
    if (y != 0 && y != 1) throw InvalidArgument("labels must be 0 or 1");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw InvalidArgument("scores must not be NaN");
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (int y : labels) positives += static_cast<std::size_t>(y);
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw InvalidArgument("roc_auc needs at least one positive and one negative");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Sum of mid-ranks (1-based) of the positives; every rank is a multiple of
  // 1/2 so the accumulation is exact.
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t tied_positives = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      tied_positives += static_cast<std::size_t>(labels[order[j]]);
      ++j;
    }
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    positive_rank_sum += mid_rank * static_cast<double>(tied_positives);
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

double f1_from_counts(const ConfusionCounts& c) {
  const std::size_t den = 2 * c.tp + c.fp + c.fn;
  return ratio(2 * c.tp, den);
}

ConfusionCounts confusion_at(std::span<const double> scores, std::span<const int> labels,
                             double threshold) {
  check_lengths(scores, labels);
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      predicted ? ++c.tp : ++c.fn;
    } else {
      predicted ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

std::vector<double> candidate_thresholds(std::span<const double> scores) {
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> out;
  if (sorted.empty()) return out;
  out.reserve(sorted.size() + 1);
  out.push_back(std::nextafter(sorted.front(), -std::numeric_limits<double>::infinity()));
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    double mid = sorted[i] + 0.5 * (sorted[i + 1] - sorted[i]);
    // Adjacent doubles: the midpoint may round down onto the lower score.
    if (mid <= sorted[i]) mid = sorted[i + 1];
    out.push_back(mid);
  }
  out.push_back(std::nextafter(sorted.back(), std::numeric_limits<double>::infinity()));
  return out;
}

double select_threshold_pr(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  std::size_t positives = 0;
  for (int y : labels) positives += static_cast<std::size_t>(y);
  if (positives == 0) throw InvalidArgument("threshold selection needs at least one positive");

  // Walk candidates from the highest threshold down. Between consecutive
  // candidates exactly one group of tied scores flips to "predicted".
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  const auto candidates = candidate_thresholds(scores);

  ConfusionCounts c;
  c.fn = positives;
  c.tn = scores.size() - positives;
  std::size_t ci = candidates.size() - 1;  // above-max sentinel: nothing predicted
  double best_threshold = candidates[ci];
  double best_f1 = f1_from_counts(c);
  std::size_t pos = 0;
  while (pos < order.size()) {
    const double s = scores[order[pos]];
    while (pos < order.size() && scores[order[pos]] == s) {
      if (labels[order[pos]] == 1) {
        ++c.tp;
        --c.fn;
      } else {
        ++c.fp;
        --c.tn;
      }
      ++pos;
    }
    --ci;
    const double f1 = f1_from_counts(c);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_threshold = candidates[ci];
    }
  }
  return best_threshold;
}

EvalReport metrics_at_threshold(std::span<const double> scores, std::span<const int> labels,
                                double threshold) {
  if (scores.empty()) throw InvalidArgument("cannot evaluate an empty prediction set");
  EvalReport r;
  r.threshold = threshold;
  r.counts = confusion_at(scores, labels, threshold);
  const auto& c = r.counts;
  r.accuracy = ratio(c.tp + c.tn, c.total());
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.f1 = f1_from_counts(c);
  r.false_positive_rate = ratio(c.fp, c.fp + c.tn);
  if (c.tp + c.fn > 0 && c.fp + c.tn > 0) r.roc_auc = roc_auc(scores, labels);
  return r;
}

std::vector<double> IntensityBreakdown::bin_edges() const {
  std::vector<double> edges;
  for (const auto& b : bins) edges.push_back(b.lo);
  if (!bins.empty()) edges.push_back(bins.back().hi);
  return edges;
}

std::string IntensityBreakdown::to_table() const {
  std::string out = "log10_lo,log10_hi,positive_count,detected_count,detection_rate\n";
  for (const auto& b : bins) {
    out += format_double(b.lo) + "," + format_double(b.hi) + "," +
           std::to_string(b.positive_count) + "," + std::to_string(b.detected_count) + ",";
    if (b.detection_rate) out += format_double(*b.detection_rate);
    out += "\n";
  }
  return out;
}

IntensityBreakdown intensity_breakdown(std::span<const double> scores, std::span<const int> labels,
                                       std::span<const std::optional<double>> intensities,
                                       double threshold, double bin_width) {
  check_lengths(scores, labels);
  if (intensities.size() != scores.size()) {
    throw InvalidArgument("intensities and scores differ in length");
  }
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) {
    throw InvalidArgument("bin_width must be positive");
  }

  std::map<long long, std::pair<std::size_t, std::size_t>> counts;  // bin -> (positives, detected)
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    if (!intensities[i] || !(*intensities[i] > 0.0)) {
      throw InvalidArgument("positive record " + std::to_string(i) + " has no positive intensity");
    }
    const auto bin = static_cast<long long>(std::floor(std::log10(*intensities[i]) / bin_width));
    auto& slot = counts[bin];
    ++slot.first;
    if (scores[i] >= threshold) ++slot.second;
  }

  IntensityBreakdown out;
  out.bin_width = bin_width;
  if (counts.empty()) return out;
  const long long first = counts.begin()->first;
  const long long last = counts.rbegin()->first;
  for (long long b = first; b <= last; ++b) {
    IntensityBin bin;
    bin.lo = static_cast<double>(b) * bin_width;
    bin.hi = static_cast<double>(b + 1) * bin_width;
    if (auto it = counts.find(b); it != counts.end()) {
      bin.positive_count = it->second.first;
      bin.detected_count = it->second.second;
      bin.detection_rate = ratio(bin.detected_count, bin.positive_count);
    }
    out.bins.push_back(bin);
  }
  return out;
}

std::string format_report(const EvalReport& r,
                          const std::vector<std::pair<std::string, std::string>>& extra) {
  std::string out;
  auto line = [&](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
  line("threshold", format_double(r.threshold));
  line("accuracy", format_double(r.accuracy));
  line("precision", format_double(r.precision));
  line("recall", format_double(r.recall));
  line("f1", format_double(r.f1));
  line("false_positive_rate", format_double(r.false_positive_rate));
  line("roc_auc", r.roc_auc ? format_double(*r.roc_auc) : "NA");
  line("tp", std::to_string(r.counts.tp));
  line("fp", std::to_string(r.counts.fp));
  line("tn", std::to_string(r.counts.tn));
  line("fn", std::to_string(r.counts.fn));
  for (const auto& [k, v] : extra) line(k, v);
  return out;
}

}  // namespace eapo
