#pragma once

// Scalar type and ABI namespace. The library is normally built with 32-bit
// reals; defining SSAC_DOUBLE_PRECISION builds a 64-bit variant (used by the
// gradient-check suites) whose symbols live in a different inline namespace,
// so both variants may be linked into one binary.

#include <cstddef>
#include <cstdint>

#if defined(SSAC_DOUBLE_PRECISION)
#define SSAC_ABI f64
#else
#define SSAC_ABI f32
#endif

namespace ssac {
inline namespace SSAC_ABI {

#if defined(SSAC_DOUBLE_PRECISION)
using Real = double;
#else
using Real = float;
#endif

}  // namespace SSAC_ABI
}  // namespace ssac
