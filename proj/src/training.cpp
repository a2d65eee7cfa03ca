#include "eapo/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "eapo/error.hpp"

namespace eapo {

namespace {

RowMatrix gather(std::span<const Record> records, std::span<const std::size_t> idx) {
  const auto d = static_cast<Eigen::Index>(records.front().features.size());
  RowMatrix m(static_cast<Eigen::Index>(idx.size()), d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(records[idx[i]].features.data(), d);
  }
  return m;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

AdamState AdamState::zeros(std::size_t n) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw InvalidArgument("adam_step: parameter, gradient and state lengths differ");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw InvalidArgument("adam_step: non-finite gradient");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

void PretrainConfig::validate() const {
  if (epochs == 0) throw InvalidArgument("pretrain epochs must be >= 1");
  if (batch_size == 0) throw InvalidArgument("pretrain batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("pretrain learning_rate must be positive");
  }
  if (loss == LossKind::focal) focal.validate();
}

FinetuneMode parse_finetune_mode(std::string_view name) {
  if (name == "eapo") return FinetuneMode::eapo;
  if (name == "sft_only" || name == "sft-only") return FinetuneMode::sft_only;
  throw InvalidArgument("unknown fine-tune mode '" + std::string(name) + "'");
}

std::string_view to_string(FinetuneMode mode) {
  return mode == FinetuneMode::eapo ? "eapo" : "sft_only";
}

void FinetuneConfig::validate() const {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  if (epochs == 0) throw InvalidArgument("fine-tune epochs must be >= 1");
  if (batch_size == 0) throw InvalidArgument("fine-tune batch_size must be >= 1");
  // lr = 0 is accepted: it is the documented null-update configuration.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("fine-tune learning_rate must be nonnegative");
  }
  weights.validate();
  if (sft_loss == LossKind::focal) focal.validate();
}

EapoWeights FinetuneConfig::effective_weights() const {
  EapoWeights w = weights;
  if (mode == FinetuneMode::sft_only) {
    w.lambda1 = 0.0;
    w.lambda2 = 0.0;
  }
  return w;
}

std::string TrainHistory::to_table() const {
  std::string out = "epoch,loss,metric\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + format_double(e.mean_loss) + ",";
    if (e.metric) out += format_double(*e.metric);
    out += "\n";
  }
  return out;
}

TrainResult pretrain(Classifier model, const Dataset& train, const PretrainConfig& cfg,
                     const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw InvalidArgument("cannot pretrain on an empty dataset");
  if (train.dim() != model.dim()) throw InvalidArgument("dataset dimension does not match the model");

  const BaseLoss loss{cfg.loss, cfg.focal};
  const auto& records = train.records();
  const std::size_t n = records.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = stream(cfg.seed, 11);
  AdamState adam = AdamState::zeros(model.num_parameters());
  std::vector<double> grad(model.num_parameters());
  ForwardCache cache;
  TrainHistory history;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const auto batch = std::span(order).subspan(start, std::min(cfg.batch_size, n - start));
      const RowMatrix x = gather(records, batch);
      const Eigen::VectorXd logits = model.forward_batch(x, &cache);
      Eigen::VectorXd upstream(logits.size());
      const double scale = 1.0 / static_cast<double>(batch.size());
      double batch_sum = 0.0;
      for (Eigen::Index i = 0; i < logits.size(); ++i) {
        const auto l = loss(logits(i), records[batch[static_cast<std::size_t>(i)]].label);
        batch_sum += l.value;
        upstream(i) = scale * l.dvalue_dlogit;
      }
      if (!std::isfinite(batch_sum)) {
        throw TrainingAborted("pretrain: non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch starting at " + std::to_string(start));
      }
      epoch_sum += batch_sum;
      std::fill(grad.begin(), grad.end(), 0.0);
      model.backward_batch(cache, upstream, grad);
      adam_step(adam, model.mutable_parameters(), grad, cfg.learning_rate);
    }
    EpochRecord rec{epoch, epoch_sum / static_cast<double>(n), std::nullopt};
    if (on_epoch) on_epoch(model, rec);
    spdlog::debug("pretrain epoch {} loss {:.6f}", epoch, rec.mean_loss);
    history.epochs.push_back(rec);
  }
  return {std::move(model), std::move(history)};
}

ObjectiveEvaluation eapo_objective(const Classifier& model, std::span<const Record> local,
                                   std::span<const double> local_ref,
                                   std::span<const Record> extreme,
                                   std::span<const double> extreme_ref, const EapoWeights& w,
                                   const BaseLoss& sft_loss) {
  if (local.size() != local_ref.size() || extreme.size() != extreme_ref.size()) {
    throw InvalidArgument("reference logits must match the records one-to-one");
  }
  std::vector<std::size_t> local_idx(local.size());
  std::iota(local_idx.begin(), local_idx.end(), 0);
  std::vector<std::size_t> extreme_idx(extreme.size());
  std::iota(extreme_idx.begin(), extreme_idx.end(), 0);

  ObjectiveEvaluation out;
  out.grad.assign(model.num_parameters(), 0.0);
  ForwardCache local_cache;
  ForwardCache extreme_cache;

  std::vector<SftItem> sft;
  std::vector<PairItem> local_pairs;
  std::vector<PairItem> extreme_pairs;
  if (!local.empty()) {
    const Eigen::VectorXd logits = model.forward_batch(gather(local, local_idx), &local_cache);
    for (std::size_t i = 0; i < local.size(); ++i) {
      const double z = logits(static_cast<Eigen::Index>(i));
      sft.push_back({z, local[i].label});
      if (w.lambda1 != 0.0) local_pairs.push_back({z, local_ref[i], local[i].label});
    }
  }
  if (!extreme.empty() && w.lambda2 != 0.0) {
    const Eigen::VectorXd logits = model.forward_batch(gather(extreme, extreme_idx), &extreme_cache);
    for (std::size_t i = 0; i < extreme.size(); ++i) {
      extreme_pairs.push_back({logits(static_cast<Eigen::Index>(i)), extreme_ref[i], extreme[i].label});
    }
  }

  out.terms = eapo_batch(sft, local_pairs, extreme_pairs, w, sft_loss);

  if (!local.empty()) {
    Eigen::VectorXd up(static_cast<Eigen::Index>(local.size()));
    for (std::size_t i = 0; i < local.size(); ++i) {
      double g = out.terms.sft_grads[i];
      if (!local_pairs.empty()) g += out.terms.local_grads[i];
      up(static_cast<Eigen::Index>(i)) = g;
    }
    model.backward_batch(local_cache, up, out.grad);
  }
  if (!extreme_pairs.empty()) {
    Eigen::VectorXd up = Eigen::Map<const Eigen::VectorXd>(
        out.terms.extreme_grads.data(), static_cast<Eigen::Index>(extreme_pairs.size()));
    model.backward_batch(extreme_cache, up, out.grad);
  }
  return out;
}

TrainResult finetune(Classifier model, const ReferencePolicy& ref, const LocalManifold& manifold,
                     const ExtremeSubset& extreme, const FinetuneConfig& cfg,
                     const EpochCallback& on_epoch) {
  cfg.validate();
  if (manifold.records.empty()) throw InvalidArgument("cannot fine-tune on an empty manifold");
  if (ref.snapshot().dim() != model.dim() || manifold.records.front().features.size() != model.dim()) {
    throw InvalidArgument("manifold, reference and model dimensions differ");
  }

  const EapoWeights w = cfg.effective_weights();
  const BaseLoss sft_loss{cfg.sft_loss, cfg.focal};
  TrainHistory history;
  if (extreme.empty()) {
    history.warnings.push_back(
        "extreme subset is empty; the extreme preference term contributes 0");
    spdlog::warn("{}", history.warnings.back());
  }

  const auto& local = manifold.records;
  const auto& ext = extreme.records;
  std::vector<double> local_ref(local.size());
  {
    const Eigen::VectorXd z = ref.snapshot().forward_batch(to_matrix(local));
    for (std::size_t i = 0; i < local.size(); ++i) local_ref[i] = z(static_cast<Eigen::Index>(i));
  }
  std::vector<double> extreme_ref(ext.size());
  if (!ext.empty()) {
    const Eigen::VectorXd z = ref.snapshot().forward_batch(to_matrix(ext));
    for (std::size_t i = 0; i < ext.size(); ++i) extreme_ref[i] = z(static_cast<Eigen::Index>(i));
  }

  std::vector<std::size_t> order(local.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> ext_order(ext.size());
  std::iota(ext_order.begin(), ext_order.end(), 0);
  auto rng = stream(cfg.seed, 21);
  auto ext_rng = stream(cfg.seed, 22);
  std::size_t ext_cursor = ext.size();  // forces a shuffle before first use

  AdamState adam = AdamState::zeros(model.num_parameters());
  std::vector<Record> batch_local;
  std::vector<double> batch_local_ref;
  std::vector<Record> batch_ext;
  std::vector<double> batch_ext_ref;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < local.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, local.size() - start);
      batch_local.clear();
      batch_local_ref.clear();
      for (std::size_t i = start; i < start + len; ++i) {
        batch_local.push_back(local[order[i]]);
        batch_local_ref.push_back(local_ref[order[i]]);
      }

      batch_ext.clear();
      batch_ext_ref.clear();
      if (!ext.empty()) {
        if (ext.size() <= cfg.batch_size) {
          for (std::size_t i = 0; i < ext.size(); ++i) {
            batch_ext.push_back(ext[i]);
            batch_ext_ref.push_back(extreme_ref[i]);
          }
        } else {
          while (batch_ext.size() < cfg.batch_size) {
            if (ext_cursor == ext.size()) {
              std::shuffle(ext_order.begin(), ext_order.end(), ext_rng);
              ext_cursor = 0;
            }
            const std::size_t j = ext_order[ext_cursor++];
            batch_ext.push_back(ext[j]);
            batch_ext_ref.push_back(extreme_ref[j]);
          }
        }
      }

      auto eval = eapo_objective(model, batch_local, batch_local_ref, batch_ext, batch_ext_ref, w,
                                 sft_loss);
      if (!std::isfinite(eval.terms.value)) {
        throw TrainingAborted("fine-tune: non-finite objective at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(steps));
      }
      epoch_sum += eval.terms.value;
      ++steps;
      adam_step(adam, model.mutable_parameters(), eval.grad, cfg.learning_rate);
    }
    EpochRecord rec{epoch, epoch_sum / static_cast<double>(steps), std::nullopt};
    if (on_epoch) on_epoch(model, rec);
    spdlog::debug("finetune epoch {} loss {:.6f}", epoch, rec.mean_loss);
    history.epochs.push_back(rec);
  }
  return {std::move(model), std::move(history)};
}

}  // namespace eapo
