#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eapo/data.hpp"
#include "eapo/model.hpp"
#include "eapo/objectives.hpp"
#include "eapo/retrieval.hpp"

namespace eapo {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros(std::size_t n);
};

/// One bias-corrected Adam update, applied in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double lr);

struct PretrainConfig {
  LossKind loss = LossKind::focal;
  FocalParams focal;
  std::size_t epochs = 50;
  double learning_rate = 0.005;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;

  /// Epoch count used when none is configured: 100 for bce, 50 for focal.
  static std::size_t default_epochs(LossKind loss) { return loss == LossKind::bce ? 100 : 50; }
  void validate() const;
};

enum class FinetuneMode { eapo, sft_only };

FinetuneMode parse_finetune_mode(std::string_view name);
std::string_view to_string(FinetuneMode mode);

struct FinetuneConfig {
  std::size_t k = 5;
  EapoWeights weights;
  LossKind sft_loss = LossKind::focal;
  FocalParams focal;
  std::size_t epochs = 100;
  double learning_rate = 1e-4;
  std::size_t batch_size = 256;
  FinetuneMode mode = FinetuneMode::eapo;
  std::uint64_t seed = 0;

  void validate() const;
  /// Weights actually used: sft_only zeroes both preference terms.
  EapoWeights effective_weights() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> metric;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<std::string> warnings;

  /// `epoch,loss,metric` table; metric is empty when absent.
  std::string to_table() const;
};

struct TrainResult {
  Classifier model;
  TrainHistory history;
};

/// Called after every epoch with the current model; may fill record.metric
/// or write an interim checkpoint.
using EpochCallback = std::function<void(const Classifier&, EpochRecord&)>;

/// Mini-batch Adam on the mean supervised loss, reshuffled every epoch from
/// `cfg.seed`.
TrainResult pretrain(Classifier model, const Dataset& train, const PretrainConfig& cfg,
                     const EpochCallback& on_epoch = {});

/// Value and flat parameter gradient of the combined objective on a fixed
/// batch. The local records serve as both SFT items and local preference
/// pairs; reference logits are supplied per record.
struct ObjectiveEvaluation {
  EapoBatchResult terms;
  std::vector<double> grad;
};

ObjectiveEvaluation eapo_objective(const Classifier& model, std::span<const Record> local,
                                   std::span<const double> local_ref,
                                   std::span<const Record> extreme,
                                   std::span<const double> extreme_ref, const EapoWeights& w,
                                   const BaseLoss& sft_loss);

/// Adapts `model` on the retrieved manifold. Each step draws one mini-batch
/// of manifold records (shared by the SFT and local preference terms) and
/// one mini-batch of extreme records (the whole subset when it is smaller
/// than batch_size). Reference logits are computed once up front.
TrainResult finetune(Classifier model, const ReferencePolicy& ref, const LocalManifold& manifold,
                     const ExtremeSubset& extreme, const FinetuneConfig& cfg,
                     const EpochCallback& on_epoch = {});

}  // namespace eapo
