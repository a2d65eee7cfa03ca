#include "eapo/retrieval.hpp"

#include <algorithm>
#include <utility>

#include "eapo/error.hpp"

namespace eapo {

BruteForceIndex::BruteForceIndex(const Dataset& train) : n_(train.size()), dim_(train.dim()) {
  if (train.empty()) throw InvalidArgument("neighbour search over an empty training set");
  points_.reserve(n_ * dim_);
  for (const auto& r : train.records()) {
    points_.insert(points_.end(), r.features.begin(), r.features.end());
  }
}

std::vector<std::size_t> BruteForceIndex::query(std::span<const double> x, std::size_t k) const {
  if (k == 0) throw InvalidArgument("k must be positive");
  if (x.size() != dim_) throw InvalidArgument("query dimension does not match training set");

  std::vector<std::pair<double, std::size_t>> dist(n_);
  const double* p = points_.data();
  for (std::size_t j = 0; j < n_; ++j, p += dim_) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      const double diff = p[i] - x[i];
      acc += diff * diff;
    }
    dist[j] = {acc, j};
  }
  // Pair comparison orders by distance first, then index.
  const std::size_t take = std::min(k, n_);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  std::vector<std::size_t> out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = dist[i].second;
  return out;
}

std::vector<std::size_t> neighborhood(std::span<const double> query, const Dataset& train,
                                      std::size_t k) {
  if (k == 0) throw InvalidArgument("k must be positive");
  if (train.empty()) throw InvalidArgument("neighbour search over an empty training set");
  if (query.size() != train.dim()) {
    throw InvalidArgument("query dimension does not match training set");
  }
  return BruteForceIndex(train).query(query, k);
}

LocalManifold build_local_manifold(const std::vector<std::vector<double>>& test_features,
                                   const Dataset& train, std::size_t k) {
  if (test_features.empty()) throw InvalidArgument("no test queries for manifold retrieval");
  if (k == 0) throw InvalidArgument("k must be positive");
  const BruteForceIndex index(train);
  std::vector<char> seen(train.size(), 0);
  for (const auto& q : test_features) {
    for (auto j : index.query(q, k)) seen[j] = 1;
  }
  LocalManifold m;
  m.query_count = test_features.size();
  for (std::size_t j = 0; j < seen.size(); ++j) {
    if (seen[j]) {
      m.source_indices.push_back(j);
      m.records.push_back(train[j]);
    }
  }
  return m;
}

ExtremeSubset extract_extreme(const LocalManifold& manifold) {
  ExtremeSubset out;
  for (const auto& r : manifold.records) {
    if (r.label == 1) out.records.push_back(r);
  }
  return out;
}

std::vector<PreferencePair> make_preference_pairs(std::span<const Record> records) {
  std::vector<PreferencePair> pairs;
  pairs.reserve(records.size());
  for (const auto& r : records) pairs.push_back({r.features, r.label, 1 - r.label});
  return pairs;
}

}  // namespace eapo
