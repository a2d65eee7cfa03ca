#include "eapo/objectives.hpp"

#include <cmath>
#include <string>

#include "eapo/error.hpp"

namespace eapo {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + " must be finite");
}

int sign_of(int y) {
  if (y != 0 && y != 1) throw InvalidArgument("label must be 0 or 1");
  return 2 * y - 1;
}

}  // namespace

void EapoWeights::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be positive");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !std::isfinite(lambda1) || !std::isfinite(lambda2)) {
    throw InvalidArgument("lambda weights must be nonnegative");
  }
}

void FocalParams::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidArgument("focal gamma must be >= 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("focal alpha must lie in (0, 1]");
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "bce") return LossKind::bce;
  if (name == "focal") return LossKind::focal;
  throw InvalidArgument("unknown loss '" + std::string(name) + "' (expected bce or focal)");
}

std::string_view to_string(LossKind kind) {
  return kind == LossKind::bce ? "bce" : "focal";
}

double softplus(double x) {
  // max(x, 0) + log1p(exp(-|x|))
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LossValue bce(double logit, int y) {
  require_finite(logit, "logit");
  const double s = sign_of(y);
  return {softplus(-s * logit), -s * sigmoid(-s * logit)};
}

LossValue focal(double logit, int y, const FocalParams& p) {
  require_finite(logit, "logit");
  const double s = sign_of(y);
  const double u = s * logit;
  const double log_pt = -softplus(-u);
  const double pt = sigmoid(u);
  const double one_minus_pt = sigmoid(-u);
  const double alpha_t = !p.alpha_weighting ? 1.0 : (y == 1 ? p.alpha : 1.0 - p.alpha);
  const double mod = p.gamma == 0.0 ? 1.0 : std::pow(one_minus_pt, p.gamma);
  // d/du [-(1-p)^g log p] = (1-p)^g (g p log p - (1-p))
  const double dvalue_du = alpha_t * mod * (p.gamma * pt * log_pt - one_minus_pt);
  return {-alpha_t * mod * log_pt, s * dvalue_du};
}

LossValue dpo(double logit_theta, double logit_ref, int y_plus, double beta) {
  require_finite(logit_theta, "logit_theta");
  require_finite(logit_ref, "logit_ref");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be positive");
  const double s = sign_of(y_plus);
  const double margin = beta * s * (logit_theta - logit_ref);
  return {softplus(-margin), -beta * s * sigmoid(-margin)};
}

LossValue BaseLoss::operator()(double logit, int y) const {
  return kind == LossKind::bce ? bce(logit, y) : eapo::focal(logit, y, focal);
}

EapoBatchResult eapo_batch(std::span<const SftItem> sft_items, std::span<const PairItem> local_pairs,
                           std::span<const PairItem> extreme_pairs, const EapoWeights& w,
                           const BaseLoss& base_loss) {
  if (sft_items.empty() && local_pairs.empty() && extreme_pairs.empty()) {
    throw InvalidArgument("eapo_batch needs at least one item");
  }
  w.validate();
  EapoBatchResult out;

  if (!sft_items.empty()) {
    const double scale = 1.0 / static_cast<double>(sft_items.size());
    out.sft_grads.reserve(sft_items.size());
    double sum = 0.0;
    for (const auto& it : sft_items) {
      const auto l = base_loss(it.logit, it.y);
      sum += l.value;
      out.sft_grads.push_back(scale * l.dvalue_dlogit);
    }
    out.sft_value = sum * scale;
  }

  auto pair_term = [&](std::span<const PairItem> pairs, double weight, std::vector<double>& grads) {
    if (pairs.empty()) return 0.0;
    const double scale = 1.0 / static_cast<double>(pairs.size());
    grads.reserve(pairs.size());
    double sum = 0.0;
    for (const auto& p : pairs) {
      const auto l = dpo(p.logit_theta, p.logit_ref, p.y_plus, w.beta);
      sum += l.value;
      grads.push_back(weight * scale * l.dvalue_dlogit);
    }
    return sum * scale;
  };
  out.local_value = pair_term(local_pairs, w.lambda1, out.local_grads);
  out.extreme_value = pair_term(extreme_pairs, w.lambda2, out.extreme_grads);

  out.value = out.sft_value + w.lambda1 * out.local_value + w.lambda2 * out.extreme_value;
  return out;
}

}  // namespace eapo
