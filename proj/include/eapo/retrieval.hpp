#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "eapo/data.hpp"

namespace eapo {

/// Training records retrieved around a set of test queries (the local
/// manifold). Records are kept in ascending training-index order.
struct LocalManifold {
  std::vector<Record> records;
  std::vector<std::size_t> source_indices;
  std::size_t query_count = 0;
};

/// Positive-label members of a LocalManifold, in manifold order.
struct ExtremeSubset {
  std::vector<Record> records;

  bool empty() const { return records.empty(); }
};

struct PreferencePair {
  std::vector<double> features;
  int y_plus = 0;
  int y_minus = 1;
};

/// Exact k-nearest-neighbour search by linear scan over a training set.
///
/// Features are copied into one contiguous row-major buffer on construction
/// so repeated queries stream through memory. Ordering is by squared
/// Euclidean distance, ties resolved toward the lower training index.
class BruteForceIndex {
public:
  explicit BruteForceIndex(const Dataset& train);

  std::size_t size() const { return n_; }
  std::size_t dim() const { return dim_; }

  std::vector<std::size_t> query(std::span<const double> x, std::size_t k) const;

private:
  std::vector<double> points_;
  std::size_t n_ = 0;
  std::size_t dim_ = 0;
};

/// Indices of the min(k, n) training records closest to `query`, sorted by
/// (distance, index).
std::vector<std::size_t> neighborhood(std::span<const double> query, const Dataset& train,
                                      std::size_t k);

/// Deduplicated union of the k-neighbourhoods of every query.
LocalManifold build_local_manifold(const std::vector<std::vector<double>>& test_features,
                                   const Dataset& train, std::size_t k);

ExtremeSubset extract_extreme(const LocalManifold& manifold);

std::vector<PreferencePair> make_preference_pairs(std::span<const Record> records);

}  // namespace eapo
