#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "eapo/error.hpp"
#include "eapo/retrieval.hpp"
#include "oracles.hpp"

using namespace eapo;

namespace {

// (0,0), (1,0), (3,0), (0,2)
Dataset four_points() {
  return Dataset({{{0, 0}, 0, {}, 0}, {{1, 0}, 1, 1e8, 1}, {{3, 0}, 0, {}, 2}, {{0, 2}, 1, 5e8, 3}},
                 2);
}

Dataset from_labels(const std::vector<int>& labels) {
  std::vector<Record> recs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    recs.push_back({{static_cast<double>(i)}, labels[i],
                    labels[i] ? std::optional<double>(1e8) : std::nullopt, i});
  }
  return Dataset(recs, 1);
}

}  // namespace

TEST_CASE("neighborhood hand-checked cases") {
  auto ds = four_points();
  CHECK(neighborhood(std::vector<double>{0.9, 0}, ds, 2) == std::vector<std::size_t>{1, 0});
  CHECK(neighborhood(std::vector<double>{3, 0}, ds, 1) == std::vector<std::size_t>{2});
  auto all = neighborhood(std::vector<double>{0, 0}, ds, 10);
  CHECK(all.size() == 4);
  CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 4);
}

TEST_CASE("neighborhood returns the record itself at k = 1") {
  std::mt19937_64 rng(1);
  auto ds = oracle::random_dataset(rng, 50, 3);
  CHECK(neighborhood(ds[7].features, ds, 1) == std::vector<std::size_t>{7});
}

TEST_CASE("ties resolve toward the lower index") {
  // Equidistant from (0,0): indices 0..3 all at distance 1.
  Dataset ds({{{1, 0}, 0, {}, 0}, {{0, 1}, 0, {}, 1}, {{-1, 0}, 0, {}, 2}, {{0, -1}, 0, {}, 3}}, 2);
  CHECK(neighborhood(std::vector<double>{0, 0}, ds, 2) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("neighborhood errors") {
  auto ds = four_points();
  CHECK_THROWS_AS(neighborhood(std::vector<double>{0, 0}, ds, 0), InvalidArgument);
  CHECK_THROWS_AS(neighborhood(std::vector<double>{0}, ds, 1), InvalidArgument);
  CHECK_THROWS_AS(neighborhood(std::vector<double>{0, 0}, Dataset({}, 2), 1), InvalidArgument);
}

TEST_CASE("neighborhood matches the full-sort oracle and is monotone in k") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    const std::size_t d = 1 + rng() % 5;
    auto ds = oracle::random_dataset(rng, n, d);
    std::normal_distribution<double> nd;
    std::vector<double> q(d);
    for (auto& v : q) v = nd(rng);
    const auto full = oracle::knn_full_sort(q, ds);
    for (std::size_t k = 1; k <= n; ++k) {
      auto got = neighborhood(q, ds, k);
      REQUIRE(got == std::vector<std::size_t>(full.begin(), full.begin() + k));
      if (k < n) {
        const auto next = neighborhood(q, ds, k + 1);
        const std::set<std::size_t> bigger(next.begin(), next.end());
        const std::set<std::size_t> smaller(got.begin(), got.end());
        CHECK(std::includes(bigger.begin(), bigger.end(), smaller.begin(), smaller.end()));
      }
    }
  }
}

TEST_CASE("local manifold unions and deduplicates") {
  auto ds = four_points();
  auto m = build_local_manifold({{0.9, 0}, {0, 1.9}}, ds, 2);
  CHECK(m.source_indices == std::vector<std::size_t>{0, 1, 3});
  CHECK(m.records.size() == 3);
  CHECK(m.query_count == 2);

  auto twice = build_local_manifold({{0.9, 0}, {0.9, 0}}, ds, 2);
  CHECK(twice.records.size() == 2);

  auto single = build_local_manifold({{0.9, 0}}, ds, 3);
  auto nb = neighborhood(std::vector<double>{0.9, 0}, ds, 3);
  std::sort(nb.begin(), nb.end());
  CHECK(single.source_indices == nb);

  CHECK_THROWS_AS(build_local_manifold({}, ds, 2), InvalidArgument);
  CHECK_THROWS_AS(build_local_manifold({{1.0}}, ds, 2), InvalidArgument);
}

TEST_CASE("manifold invariants on random data") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    auto train = oracle::random_dataset(rng, 120, 4);
    auto test = oracle::random_dataset(rng, 30, 4);
    auto queries = test.features();
    const std::size_t k = 1 + trial % 6;
    auto m = build_local_manifold(queries, train, k);
    CHECK(m.records.size() == m.source_indices.size());
    CHECK(m.records.size() <= queries.size() * k);
    CHECK(std::is_sorted(m.source_indices.begin(), m.source_indices.end()));
    CHECK(std::adjacent_find(m.source_indices.begin(), m.source_indices.end()) ==
          m.source_indices.end());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      CHECK(m.records[i] == train[m.source_indices[i]]);
    }
    std::shuffle(queries.begin(), queries.end(), rng);
    CHECK(build_local_manifold(queries, train, k).source_indices == m.source_indices);

    auto ex = extract_extreme(m);
    std::size_t positives = 0;
    for (const auto& r : m.records) positives += r.label;
    CHECK(ex.records.size() == positives);
    for (const auto& r : ex.records) {
      CHECK(r.label == 1);
      CHECK(std::find(m.records.begin(), m.records.end(), r) != m.records.end());
    }
  }
}

TEST_CASE("test set equal to train set with k = 1 retrieves the whole train set") {
  std::mt19937_64 rng(5);
  auto train = oracle::random_dataset(rng, 80, 3);
  auto m = build_local_manifold(train.features(), train, 1);
  CHECK(m.records == train.records());
}

TEST_CASE("extract_extreme filters positives") {
  auto all_neg = build_local_manifold({{0.0}}, from_labels({0, 0, 0}), 3);
  CHECK(extract_extreme(all_neg).empty());
  auto all_pos = build_local_manifold({{0.0}}, from_labels({1, 1}), 2);
  CHECK(extract_extreme(all_pos).records == all_pos.records);
  auto mixed = build_local_manifold({{2.0}}, from_labels({0, 1, 0, 1, 1}), 5);
  auto ex = extract_extreme(mixed);
  REQUIRE(ex.records.size() == 3);
  CHECK(ex.records[0].index == 1);
  CHECK(ex.records[1].index == 3);
  CHECK(ex.records[2].index == 4);
}

TEST_CASE("preference pairs prefer the observed label") {
  auto ds = from_labels({1, 0, 1});
  auto pairs = make_preference_pairs(ds.records());
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].y_plus == 1);
  CHECK(pairs[0].y_minus == 0);
  CHECK(pairs[1].y_plus == 0);
  CHECK(pairs[1].y_minus == 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(pairs[i].features == ds[i].features);
  CHECK(make_preference_pairs({}).empty());
}
