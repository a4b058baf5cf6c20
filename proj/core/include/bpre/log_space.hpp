#ifndef BPRE_LOG_SPACE_HPP
#define BPRE_LOG_SPACE_HPP

#include <cmath>
#include <limits>
#include <span>

// Log-space arithmetic for probabilities whose natural scale drifts
// exponentially with the generation count.

namespace bpre {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)), stable for any ordering, -inf = log(0).
inline double log_add(double a, double b) {
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  const double hi = (a > b) ? a : b;
  const double lo = (a > b) ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

// log(sum_i exp(v[i])) with a single running maximum.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return neg_inf;
  double hi = neg_inf;
  for (double x : v)
    if (x > hi) hi = x;
  if (hi == neg_inf) return neg_inf;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

// log(1 - exp(x)) for x <= 0. Uses expm1/log1p on either side of log(1/2)
// to stay accurate both for x near 0 and for very negative x.
inline double log1mexp(double x) {
  if (x >= 0.0) return (x == 0.0) ? neg_inf : std::numeric_limits<double>::quiet_NaN();
  static const double log_half = std::log(0.5);
  return (x > log_half) ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

}  // namespace bpre

#endif
