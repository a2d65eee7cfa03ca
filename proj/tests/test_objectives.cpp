#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "eapo/error.hpp"
#include "eapo/objectives.hpp"
#include "oracles.hpp"

using namespace eapo;
using doctest::Approx;

namespace {
const FocalParams kNoAlpha{2.0, 0.25, false};
}

TEST_CASE("bce anchor values") {
  auto l = bce(0.0, 1);
  CHECK(l.value == Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(l.dvalue_dlogit == Approx(-0.5).epsilon(1e-15));
  CHECK(bce(1.0, 1).value == Approx(0.31326168751822286).epsilon(1e-14));
}

TEST_CASE("bce is symmetric under label flip and strictly decreasing in s*logit") {
  for (double z = -20.0; z <= 20.0; z += 0.37) {
    CHECK(bce(z, 1).value == Approx(bce(-z, 0).value).epsilon(1e-15));
    CHECK(bce(z + 0.1, 1).value < bce(z, 1).value);
    CHECK(bce(z + 0.1, 0).value > bce(z, 0).value);
  }
}

TEST_CASE("focal reduces to bce with gamma 0 and no alpha weighting") {
  const FocalParams p{0.0, 0.25, false};
  for (double z = -30.0; z <= 30.0; z += 0.7) {
    for (int y : {0, 1}) {
      CHECK(std::fabs(focal(z, y, p).value - bce(z, y).value) <= 1e-12);
      CHECK(std::fabs(focal(z, y, p).dvalue_dlogit - bce(z, y).dvalue_dlogit) <= 1e-12);
    }
  }
}

TEST_CASE("focal anchor and alpha scaling") {
  CHECK(focal(0.0, 1, kNoAlpha).value == Approx(0.17328679513998632).epsilon(1e-14));
  const FocalParams weighted{2.0, 0.25, true};
  for (double z : {-3.0, -0.5, 0.0, 1.2, 4.0}) {
    CHECK(focal(z, 1, weighted).value == Approx(0.25 * focal(z, 1, kNoAlpha).value).epsilon(1e-14));
    CHECK(focal(z, 0, weighted).value == Approx(0.75 * focal(z, 0, kNoAlpha).value).epsilon(1e-14));
  }
}

TEST_CASE("focal never exceeds bce when gamma > 0") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-40, 40);
  std::uniform_real_distribution<double> g(0.01, 5);
  for (int i = 0; i < 2000; ++i) {
    const double z = u(rng);
    const FocalParams p{g(rng), 0.25, false};
    for (int y : {0, 1}) CHECK(focal(z, y, p).value <= bce(z, y).value);
  }
}

TEST_CASE("dpo anchor values") {
  for (double beta : {0.01, 0.1, 1.0, 7.0}) {
    for (int y : {0, 1}) CHECK(std::fabs(dpo(2.5, 2.5, y, beta).value - std::log(2.0)) <= 1e-12);
  }
  CHECK(dpo(1.0, 0.0, 1, 0.1).value == Approx(0.6443966600735709).epsilon(1e-14));
  CHECK(dpo(1.0, 0.0, 0, 0.1).value == Approx(0.7443966600735709).epsilon(1e-14));
  // Only the logit difference matters.
  CHECK(dpo(4.0, 3.0, 1, 0.1).value == Approx(0.6443966600735709).epsilon(1e-13));
}

TEST_CASE("dpo closed form matches the four-term expression") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-15, 15);
  std::uniform_real_distribution<double> b(0.01, 3);
  for (int i = 0; i < 10000; ++i) {
    const double t = u(rng), r = u(rng), beta = b(rng);
    const int y = static_cast<int>(rng() & 1);
    REQUIRE(std::fabs(dpo(t, r, y, beta).value - oracle::dpo_four_term(t, r, y, beta)) <= 1e-9);
  }
}

TEST_CASE("dpo is strictly decreasing in the signed margin") {
  for (double d = -10; d < 10; d += 0.25) {
    CHECK(dpo(d + 0.1, 0.0, 1, 0.5).value < dpo(d, 0.0, 1, 0.5).value);
    CHECK(dpo(d - 0.1, 0.0, 0, 0.5).value < dpo(d, 0.0, 0, 0.5).value);
  }
}

TEST_CASE("loss derivatives match central differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-8, 8);
  std::uniform_real_distribution<double> g(0, 4);
  const double h = 1e-5;
  for (int i = 0; i < 1000; ++i) {
    const double z = u(rng), r = u(rng);
    const int y = static_cast<int>(rng() & 1);
    const FocalParams fp{g(rng), 0.25, (rng() & 1) != 0};
    const double beta = 0.05 + 0.5 * g(rng);
    auto check = [&](auto fn) {
      const double fd = oracle::central_difference([&](double x) { return fn(x).value; }, z, h);
      CHECK(oracle::close_rel(fn(z).dvalue_dlogit, fd, 1e-5, 1e-9));
    };
    check([&](double x) { return bce(x, y); });
    check([&](double x) { return focal(x, y, fp); });
    check([&](double x) { return dpo(x, r, y, beta); });
  }
}

TEST_CASE("losses stay finite for |logit| <= 500") {
  for (double z = -500; z <= 500; z += 12.5) {
    for (int y : {0, 1}) {
      for (const auto& l : {bce(z, y), focal(z, y), focal(z, y, kNoAlpha), dpo(z, -z, y, 0.1)}) {
        CHECK(std::isfinite(l.value));
        CHECK(std::isfinite(l.dvalue_dlogit));
        CHECK(l.value >= 0.0);
      }
    }
  }
}

TEST_CASE("non-finite logits are rejected") {
  CHECK_THROWS_AS(bce(NAN, 1), InvalidArgument);
  CHECK_THROWS_AS(focal(INFINITY, 0), InvalidArgument);
  CHECK_THROWS_AS(dpo(0.0, NAN, 1, 0.1), InvalidArgument);
  CHECK_THROWS_AS(dpo(0.0, 0.0, 1, 0.0), InvalidArgument);
}

TEST_CASE("eapo_batch combines the three terms") {
  const BaseLoss bce_loss{LossKind::bce, {}};
  const std::vector<SftItem> sft{{0.0, 1}};
  const std::vector<PairItem> local{{1.0, 0.0, 1}};
  const std::vector<PairItem> extreme{{-1.0, 0.0, 1}};
  const EapoWeights w{0.1, 1.0, 0.1};
  auto r = eapo_batch(sft, local, extreme, w, bce_loss);
  CHECK(r.value == Approx(1.4119835066408735).epsilon(1e-13));
  REQUIRE(r.sft_grads.size() == 1);
  CHECK(r.sft_grads[0] == Approx(-0.5));
  CHECK(r.local_grads[0] == Approx(dpo(1.0, 0.0, 1, 0.1).dvalue_dlogit));
  CHECK(r.extreme_grads[0] == Approx(0.1 * dpo(-1.0, 0.0, 1, 0.1).dvalue_dlogit));
}

TEST_CASE("eapo_batch with zero lambdas is the supervised mean, exactly") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-5, 5);
  const BaseLoss loss{LossKind::focal, {}};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<SftItem> sft;
    std::vector<PairItem> pairs;
    for (int i = 0; i < 1 + trial % 7; ++i) {
      sft.push_back({u(rng), static_cast<int>(rng() & 1)});
      pairs.push_back({u(rng), u(rng), static_cast<int>(rng() & 1)});
    }
    double mean = 0.0;
    for (const auto& s : sft) mean += loss(s.logit, s.y).value;
    mean *= 1.0 / static_cast<double>(sft.size());
    auto r = eapo_batch(sft, pairs, pairs, EapoWeights{0.1, 0.0, 0.0}, loss);
    CHECK(r.value == mean);
  }
}

TEST_CASE("eapo_batch at the reference adds (lambda1 + lambda2) ln 2") {
  const BaseLoss loss{LossKind::bce, {}};
  const std::vector<SftItem> sft{{0.3, 1}, {-1.0, 0}};
  const std::vector<PairItem> pairs{{0.7, 0.7, 1}, {-2.0, -2.0, 0}};
  const EapoWeights w{0.1, 1.0, 0.1};
  const double l_sft = 0.5 * (bce(0.3, 1).value + bce(-1.0, 0).value);
  CHECK(eapo_batch(sft, pairs, pairs, w, loss).value ==
        Approx(l_sft + 1.1 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("eapo_batch edge cases") {
  const BaseLoss loss{LossKind::bce, {}};
  CHECK_THROWS_AS(eapo_batch({}, {}, {}, EapoWeights{}, loss), InvalidArgument);
  const std::vector<PairItem> local{{1.0, 0.0, 1}};
  // Empty extreme list contributes 0.
  auto r = eapo_batch({}, local, {}, EapoWeights{0.1, 1.0, 0.1}, loss);
  CHECK(r.value == Approx(0.6443966600735709));
  CHECK(r.extreme_grads.empty());
}
