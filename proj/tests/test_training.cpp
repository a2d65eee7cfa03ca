#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "eapo/error.hpp"
#include "eapo/evaluation.hpp"
#include "eapo/hashing.hpp"
#include "eapo/training.hpp"
#include "oracles.hpp"

using namespace eapo;
using doctest::Approx;

namespace {

// Two well-separated clusters along the first axis.
Dataset separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.5);
  std::vector<Record> recs;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i % 4 == 0 ? 1 : 0;
    recs.push_back({{(y ? 3.0 : -3.0) + nd(rng), nd(rng)}, y,
                    y ? std::optional<double>(1e8) : std::nullopt, i});
  }
  return Dataset(recs, 2);
}

struct Adaptation {
  Classifier model;
  LocalManifold manifold;
  ExtremeSubset extreme;
};

Adaptation small_adaptation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto train = oracle::random_dataset(rng, 200, 3, 0.2);
  auto test = oracle::random_dataset(rng, 40, 3, 0.2);
  Adaptation a{Classifier::init(ModelKind::mlp, 3, {6}, seed), {}, {}};
  a.manifold = build_local_manifold(test.features(), train, 3);
  a.extreme = extract_extreme(a.manifold);
  return a;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto st = AdamState::zeros(3);
  std::vector<double> p{1, 2, 3};
  adam_step(st, p, std::vector<double>{0, 0, 0}, 0.1);
  CHECK(p == std::vector<double>{1, 2, 3});
  CHECK(st.step_count == 1);
}

TEST_CASE("adam: first step moves by lr against the gradient sign") {
  auto st = AdamState::zeros(3);
  std::vector<double> p{0, 0, 0};
  adam_step(st, p, std::vector<double>{3.0, -0.2, 50.0}, 0.01);
  CHECK(p[0] == Approx(-0.01).epsilon(1e-6));
  CHECK(p[1] == Approx(0.01).epsilon(1e-6));
  CHECK(p[2] == Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("adam: two unit-gradient steps") {
  auto st = AdamState::zeros(1);
  std::vector<double> p{0.0};
  adam_step(st, p, std::vector<double>{1.0}, 0.1);
  adam_step(st, p, std::vector<double>{1.0}, 0.1);
  CHECK(p[0] == Approx(-0.19999999799999935).epsilon(1e-12));
}

TEST_CASE("adam: errors") {
  auto st = AdamState::zeros(2);
  std::vector<double> p{0, 0};
  CHECK_THROWS_AS(adam_step(st, p, std::vector<double>{1.0}, 0.1), InvalidArgument);
  CHECK_THROWS_AS(adam_step(st, p, std::vector<double>{1.0, NAN}, 0.1), InvalidArgument);
}

TEST_CASE("pretrain is deterministic") {
  auto ds = separable(300, 1);
  PretrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 32;
  cfg.seed = 3;
  auto a = pretrain(Classifier::init(ModelKind::mlp, 2, {8}, 1), ds, cfg);
  auto b = pretrain(Classifier::init(ModelKind::mlp, 2, {8}, 1), ds, cfg);
  CHECK(a.model.parameters() == b.model.parameters());
  CHECK(a.history.epochs.size() == 5);
  cfg.seed = 4;
  auto c = pretrain(Classifier::init(ModelKind::mlp, 2, {8}, 1), ds, cfg);
  CHECK_FALSE(c.model.parameters() == a.model.parameters());
}

TEST_CASE("pretrain separates separable data") {
  auto ds = separable(400, 2);
  PretrainConfig cfg;
  cfg.loss = LossKind::bce;
  cfg.epochs = 50;
  cfg.batch_size = 32;
  auto r = pretrain(Classifier::init(ModelKind::logistic, 2, {}, 0), ds, cfg);
  const auto scores = predict_probabilities(r.model, ds);
  CHECK(roc_auc(scores, ds.labels()) > 0.99);
  const auto& h = r.history.epochs;
  for (std::size_t e = h.size() - 10; e < h.size(); ++e) {
    CHECK(h[e].mean_loss <= h[e - 1].mean_loss + 1e-3);
  }
}

TEST_CASE("pretrain errors") {
  PretrainConfig cfg;
  CHECK_THROWS_AS(pretrain(Classifier::init(ModelKind::logistic, 2, {}, 0), Dataset({}, 2), cfg),
                  InvalidArgument);
  CHECK_THROWS_AS(pretrain(Classifier::init(ModelKind::logistic, 3, {}, 0), separable(10, 1), cfg),
                  InvalidArgument);
  cfg.epochs = 0;
  CHECK_THROWS_AS(pretrain(Classifier::init(ModelKind::logistic, 2, {}, 0), separable(10, 1), cfg),
                  InvalidArgument);
}

TEST_CASE("epoch callback sees every epoch and can attach a metric") {
  auto ds = separable(100, 5);
  PretrainConfig cfg;
  cfg.epochs = 3;
  std::size_t calls = 0;
  auto r = pretrain(Classifier::init(ModelKind::logistic, 2, {}, 0), ds, cfg,
                    [&](const Classifier& m, EpochRecord& rec) {
                      ++calls;
                      rec.metric = roc_auc(predict_probabilities(m, ds), ds.labels());
                    });
  CHECK(calls == 3);
  CHECK(r.history.epochs[2].metric.has_value());
  CHECK(r.history.to_table().rfind("epoch,loss,metric\n", 0) == 0);
}

TEST_CASE("finetune with lr 0 leaves the model unchanged") {
  auto a = small_adaptation(1);
  FinetuneConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  auto r = finetune(a.model, freeze_reference(a.model), a.manifold, a.extreme, cfg);
  CHECK(r.model.parameters() == a.model.parameters());
}

TEST_CASE("finetune is deterministic and leaves the reference untouched") {
  auto a = small_adaptation(2);
  const auto ref = freeze_reference(a.model);
  const auto before = sha256_doubles(ref.snapshot().parameters());
  FinetuneConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  auto r1 = finetune(a.model, ref, a.manifold, a.extreme, cfg);
  auto r2 = finetune(a.model, ref, a.manifold, a.extreme, cfg);
  CHECK(r1.model.parameters() == r2.model.parameters());
  CHECK_FALSE(r1.model.parameters() == a.model.parameters());
  CHECK(sha256_doubles(ref.snapshot().parameters()) == before);
  CHECK(r1.history.epochs.size() == 4);
}

TEST_CASE("sft_only equals eapo with zero lambdas bit for bit") {
  auto a = small_adaptation(3);
  const auto ref = freeze_reference(a.model);
  FinetuneConfig sft;
  sft.mode = FinetuneMode::sft_only;
  sft.epochs = 5;
  sft.batch_size = 8;
  sft.learning_rate = 1e-2;
  FinetuneConfig zero = sft;
  zero.mode = FinetuneMode::eapo;
  zero.weights.lambda1 = 0.0;
  zero.weights.lambda2 = 0.0;
  auto r1 = finetune(a.model, ref, a.manifold, a.extreme, sft);
  auto r2 = finetune(a.model, ref, a.manifold, a.extreme, zero);
  CHECK(r1.model.parameters() == r2.model.parameters());
  FinetuneConfig full = sft;
  full.mode = FinetuneMode::eapo;
  CHECK_FALSE(finetune(a.model, ref, a.manifold, a.extreme, full).model.parameters() ==
              r1.model.parameters());
}

TEST_CASE("empty extreme subset warns and matches the lambda2 = 0 run") {
  auto a = small_adaptation(4);
  const auto ref = freeze_reference(a.model);
  FinetuneConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  auto with_empty = finetune(a.model, ref, a.manifold, ExtremeSubset{}, cfg);
  CHECK(with_empty.history.warnings.size() == 1);
  FinetuneConfig no_l2 = cfg;
  no_l2.weights.lambda2 = 0.0;
  auto zero_l2 = finetune(a.model, ref, a.manifold, ExtremeSubset{}, no_l2);
  CHECK(with_empty.model.parameters() == zero_l2.model.parameters());
}

TEST_CASE("finetune errors") {
  auto a = small_adaptation(5);
  FinetuneConfig cfg;
  CHECK_THROWS_AS(finetune(a.model, freeze_reference(a.model), LocalManifold{}, a.extreme, cfg),
                  InvalidArgument);
  auto other = Classifier::init(ModelKind::mlp, 4, {6}, 0);
  CHECK_THROWS_AS(finetune(a.model, freeze_reference(other), a.manifold, a.extreme, cfg),
                  InvalidArgument);
  cfg.k = 0;
  CHECK_THROWS_AS(finetune(a.model, freeze_reference(a.model), a.manifold, a.extreme, cfg),
                  InvalidArgument);
}

TEST_CASE("finetune aborts on a non-finite objective") {
  auto a = small_adaptation(6);
  auto ref = freeze_reference(a.model);
  auto big = a.model;
  for (auto& p : big.mutable_parameters()) p = 1e308;
  FinetuneConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(finetune(big, ref, a.manifold, a.extreme, cfg), Error);
}

namespace {

// eapo_batch applied to logits from model.forward, as a function of theta.
double objective_oracle(const Classifier& m, const std::vector<Record>& local,
                        const std::vector<double>& local_ref, const std::vector<Record>& extreme,
                        const std::vector<double>& extreme_ref, const EapoWeights& w,
                        const BaseLoss& loss) {
  std::vector<SftItem> sft;
  std::vector<PairItem> lp, ep;
  for (std::size_t i = 0; i < local.size(); ++i) {
    const double z = m.forward(local[i].features);
    sft.push_back({z, local[i].label});
    lp.push_back({z, local_ref[i], local[i].label});
  }
  for (std::size_t i = 0; i < extreme.size(); ++i) {
    ep.push_back({m.forward(extreme[i].features), extreme_ref[i], extreme[i].label});
  }
  return eapo_batch(sft, lp, ep, w, loss).value;
}

}  // namespace

TEST_CASE("objective gradient matches finite differences of eapo_batch over forward") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    auto train = oracle::random_dataset(rng, 8, 3, 0.4);
    auto model = Classifier::init(ModelKind::mlp, 3, {4}, rng());
    auto ref_model = model;
    for (auto& p : ref_model.mutable_parameters()) p += 0.3 * nd(rng);
    for (auto& p : model.mutable_parameters()) p += 0.05 * nd(rng);
    std::vector<Record> local = train.records();
    std::vector<Record> extreme;
    for (const auto& r : local) if (r.label == 1) extreme.push_back(r);
    std::vector<double> lref, eref;
    for (const auto& r : local) lref.push_back(ref_model.forward(r.features));
    for (const auto& r : extreme) eref.push_back(ref_model.forward(r.features));
    const EapoWeights w{0.5, 1.0, 0.3};
    const BaseLoss loss{trial % 2 ? LossKind::bce : LossKind::focal, {}};

    auto eval = eapo_objective(model, local, lref, extreme, eref, w, loss);
    CHECK(eval.terms.value ==
          Approx(objective_oracle(model, local, lref, extreme, eref, w, loss)).epsilon(1e-12));
    const double h = 1e-5;
    for (std::size_t i = 0; i < model.num_parameters(); ++i) {
      auto plus = model, minus = model;
      plus.mutable_parameters()[i] += h;
      minus.mutable_parameters()[i] -= h;
      const double fd = (objective_oracle(plus, local, lref, extreme, eref, w, loss) -
                         objective_oracle(minus, local, lref, extreme, eref, w, loss)) /
                        (2 * h);
      CHECK(oracle::close_rel(eval.grad[i], fd, 1e-4, 1e-7));
    }
  }
}

TEST_CASE("a small full-batch step does not increase the objective") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    auto train = oracle::random_dataset(rng, 30, 4, 0.3);
    auto model = Classifier::init(ModelKind::mlp, 4, {8}, rng());
    const auto ref = freeze_reference(model);
    std::normal_distribution<double> nd;
    for (auto& p : model.mutable_parameters()) p += 0.1 * nd(rng);
    const auto& local = train.records();
    std::vector<Record> extreme;
    for (const auto& r : local) if (r.label == 1) extreme.push_back(r);
    std::vector<double> lref, eref;
    for (const auto& r : local) lref.push_back(ref.logit(r.features));
    for (const auto& r : extreme) eref.push_back(ref.logit(r.features));
    const EapoWeights w{0.1, 1.0, 0.1};
    const BaseLoss loss{LossKind::focal, {}};
    auto before = eapo_objective(model, local, lref, extreme, eref, w, loss);
    auto st = AdamState::zeros(model.num_parameters());
    adam_step(st, model.mutable_parameters(), before.grad, 1e-4);
    auto after = eapo_objective(model, local, lref, extreme, eref, w, loss);
    CHECK(after.terms.value <= before.terms.value);
  }
}
