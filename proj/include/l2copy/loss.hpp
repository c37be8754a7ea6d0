#pragma once

#include <cstdint>
#include <span>

#include "l2copy/config.hpp"
#include "l2copy/tensor.hpp"

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

/// -sum_j log max(P[j, target_j], floor) over the rows of probs [T, V].
Tensor ape_nll_sum(const Tensor& probs, std::span<const int> targets, Real floor);
/// Mean per target token of ape_nll_sum.
Tensor loss_ape(const Tensor& probs, std::span<const int> targets, Real floor = Real(1e-9));

/// sum_k (l_k - c_k)^2
Tensor copy_error_sum(const Tensor& copy_mass, std::span<const std::uint8_t> labels);
/// (1/K) sum_k (l_k - c_k)^2. Throws ContractError on a length mismatch.
Tensor loss_copy(const Tensor& copy_mass, std::span<const std::uint8_t> labels);

/// Binary cross-entropy summed over the K scores, with s clamped into
/// [eps, 1 - eps].
Tensor loss_pred(const Tensor& scores, std::span<const std::uint8_t> labels, Real eps = Real(1e-7));

/// Which terms take part; disabled terms are zeroed before weighting.
struct LossSwitches {
  bool copy = true;
  bool pred = true;
};

/// (1 - alpha) * (L_ape + lambda * L_copy) + alpha * L_pred.
/// l_copy and l_pred may be empty tensors when their switch is off.
Tensor loss_all(const Tensor& l_ape, const Tensor& l_copy, const Tensor& l_pred, const LossWeights& w,
                LossSwitches switches = {});

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
