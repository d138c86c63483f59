#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace ptl {

inline constexpr double kZ95 = 1.959963984540054;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval for a binomial proportion. n = 0 gives [0, 1].
inline Interval wilson_interval(std::size_t successes, std::size_t n, double z = kZ95) {
  if (n == 0) return {};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  // The closed form leaves rounding residue at the extremes.
  const double lo = successes == 0 ? 0.0 : std::max(0.0, centre - half);
  const double hi = successes == n ? 1.0 : std::min(1.0, centre + half);
  return {lo, hi};
}

/// sqrt(p (1 - p) / n) with p clamped to [0, 1].
inline double binomial_se(double p, std::size_t n) {
  if (n == 0) return 0.0;
  const double q = std::clamp(p, 0.0, 1.0);
  return std::sqrt(q * (1 - q) / static_cast<double>(n));
}

}  // namespace ptl
