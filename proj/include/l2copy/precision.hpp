#pragma once

// Numeric precision of the differentiable core. Training builds use 32-bit
// floats; defining L2COPY_DOUBLE switches to 64-bit for gradient checks.
// The two variants live in different inline namespaces so both libraries can
// be linked into one binary.

#ifdef L2COPY_DOUBLE
#define L2COPY_PRECISION_NS f64
#else
#define L2COPY_PRECISION_NS f32
#endif

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

#ifdef L2COPY_DOUBLE
using Real = double;
#else
using Real = float;
#endif

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
