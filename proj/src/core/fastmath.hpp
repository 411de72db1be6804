#pragma once

#include <bit>
#include <cstdint>

namespace dvb {

// exp for |x| < 700 with ~3e-16 relative error; plain arithmetic so the compiler can vectorize it.
inline double fast_exp(double x) {
  constexpr double ln2_hi = 6.93147180369123816490e-01;
  constexpr double ln2_lo = 1.90821492927058770002e-10;
  constexpr double inv_ln2 = 1.4426950408889634;
  constexpr double shifter = 6755399441055744.0;  // 1.5 * 2^52: round to nearest
  double k = (x * inv_ln2 + shifter) - shifter;
  double r = x - k * ln2_hi - k * ln2_lo;
  double p = 1.0 / 479001600;
  p = 1.0 / 39916800 + r * p;
  p = 1.0 / 3628800 + r * p;
  p = 1.0 / 362880 + r * p;
  p = 1.0 / 40320 + r * p;
  p = 1.0 / 5040 + r * p;
  p = 1.0 / 720 + r * p;
  p = 1.0 / 120 + r * p;
  p = 1.0 / 24 + r * p;
  p = 1.0 / 6 + r * p;
  p = 0.5 + r * p;
  p = 1.0 + r * p;
  p = 1.0 + r * p;
  auto ki = static_cast<std::int64_t>(k);
  return std::bit_cast<double>(std::bit_cast<std::uint64_t>(p) + (static_cast<std::uint64_t>(ki) << 52));
}

}  // namespace dvb
