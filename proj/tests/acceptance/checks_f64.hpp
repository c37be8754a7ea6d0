#pragma once

#include <string>

// Checks that must run in double precision. The implementation is compiled
// against the 64-bit library; this header exposes no precision-dependent
// types so the float acceptance driver can call it.
namespace l2copy::acceptance {

struct F64Result {
  bool pass = false;
  std::string detail;
};

/// Central finite differences for every differentiable operation and the
/// full model. Elementwise ops must stay below elementwise_tol, everything
/// else below composite_tol (relative error).
F64Result gradient_integrity(double elementwise_tol, double composite_tol);

/// The gradient of the combined loss equals the weighted sum of the
/// component gradients to within tol.
F64Result loss_gradient_additivity(double tol);

}  // namespace l2copy::acceptance
