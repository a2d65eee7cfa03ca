#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace eapo {

/// Per-example loss together with its derivative with respect to the
/// trainable model's logit.
struct LossValue {
  double value = 0.0;
  double dvalue_dlogit = 0.0;
};

struct EapoWeights {
  double beta = 0.1;
  double lambda1 = 1.0;
  double lambda2 = 0.1;

  void validate() const;
};

struct FocalParams {
  double gamma = 2.0;
  double alpha = 0.25;
  // When false, the class weight is 1 for both labels.
  bool alpha_weighting = true;

  void validate() const;
};

enum class LossKind { bce, focal };

LossKind parse_loss_kind(std::string_view name);
std::string_view to_string(LossKind kind);

/// Numerically stable log(1 + exp(x)).
double softplus(double x);
double sigmoid(double x);

LossValue bce(double logit, int y);
LossValue focal(double logit, int y, const FocalParams& p = {});

/// Binary preference loss against a frozen reference logit. For a sigmoid
/// policy the four log-probability terms collapse to
/// -log sigmoid(beta * s * (logit_theta - logit_ref)) with s = 2*y_plus - 1.
/// The derivative is taken with respect to logit_theta only.
LossValue dpo(double logit_theta, double logit_ref, int y_plus, double beta);

/// Supervised loss selector used for the SFT term and for pretraining.
struct BaseLoss {
  LossKind kind = LossKind::focal;
  FocalParams focal;

  LossValue operator()(double logit, int y) const;
};

struct SftItem {
  double logit = 0.0;
  int y = 0;
};

struct PairItem {
  double logit_theta = 0.0;
  double logit_ref = 0.0;
  int y_plus = 0;
};

/// Value and per-item logit gradients of the combined objective
///   mean(base) + lambda1 * mean(dpo local) + lambda2 * mean(dpo extreme).
/// Each gradient already carries its term weight and 1/term-count, so it can
/// be fed straight into backpropagation. Empty lists contribute 0.
struct EapoBatchResult {
  double value = 0.0;
  double sft_value = 0.0;
  double local_value = 0.0;
  double extreme_value = 0.0;
  std::vector<double> sft_grads;
  std::vector<double> local_grads;
  std::vector<double> extreme_grads;
};

EapoBatchResult eapo_batch(std::span<const SftItem> sft_items, std::span<const PairItem> local_pairs,
                           std::span<const PairItem> extreme_pairs, const EapoWeights& w,
                           const BaseLoss& base_loss);

}  // namespace eapo
