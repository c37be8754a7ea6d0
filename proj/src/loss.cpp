#include "l2copy/loss.hpp"

#include <string>
#include <vector>

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

namespace {

Tensor label_tensor(std::span<const std::uint8_t> labels) {
  std::vector<Real> v(labels.begin(), labels.end());
  return Tensor::from({labels.size()}, std::move(v));
}

void check_lengths(const char* what, const Tensor& t, std::span<const std::uint8_t> labels) {
  if (t.numel() != labels.size()) {
    throw ContractError(std::string(what) + ": " + std::to_string(t.numel()) + " values but " +
                        std::to_string(labels.size()) + " labels");
  }
}

}  // namespace

Tensor ape_nll_sum(const Tensor& probs, std::span<const int> targets, Real floor) {
  if (probs.rank() != 2 || probs.rows() != targets.size()) {
    throw ContractError("ape loss: expected one probability row per target token");
  }
  const Tensor p = clamp(pick(probs, targets), floor, Real(1));
  return scale(sum(log(p)), Real(-1));
}

Tensor loss_ape(const Tensor& probs, std::span<const int> targets, Real floor) {
  if (targets.empty()) throw ContractError("ape loss: no target tokens");
  return scale(ape_nll_sum(probs, targets, floor), Real(1) / static_cast<Real>(targets.size()));
}

Tensor copy_error_sum(const Tensor& copy_mass, std::span<const std::uint8_t> labels) {
  check_lengths("copy loss", copy_mass, labels);
  const Tensor diff = sub(reshape(copy_mass, {labels.size()}), label_tensor(labels));
  return sum(mul(diff, diff));
}

Tensor loss_copy(const Tensor& copy_mass, std::span<const std::uint8_t> labels) {
  if (labels.empty()) throw ContractError("copy loss: no mt tokens");
  return scale(copy_error_sum(copy_mass, labels), Real(1) / static_cast<Real>(labels.size()));
}

Tensor loss_pred(const Tensor& scores, std::span<const std::uint8_t> labels, Real eps) {
  check_lengths("predictor loss", scores, labels);
  const Tensor s = clamp(reshape(scores, {labels.size()}), eps, Real(1) - eps);
  const Tensor l = label_tensor(labels);
  const Tensor pos = sum(mul(l, log(s)));
  const Tensor neg = sum(mul(affine(l, Real(-1), Real(1)), log(affine(s, Real(-1), Real(1)))));
  return scale(add(pos, neg), Real(-1));
}

Tensor loss_all(const Tensor& l_ape, const Tensor& l_copy, const Tensor& l_pred, const LossWeights& w,
                LossSwitches switches) {
  const Real alpha = static_cast<Real>(w.alpha);
  const Real lambda = static_cast<Real>(w.lambda);
  Tensor edit = l_ape;
  if (switches.copy && l_copy) edit = add(edit, scale(l_copy, lambda));
  Tensor total = scale(edit, Real(1) - alpha);
  if (switches.pred && l_pred) total = add(total, scale(l_pred, alpha));
  return total;
}

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
