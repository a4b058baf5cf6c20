#ifndef BPRE_OFFSPRING_HPP
#define BPRE_OFFSPRING_HPP

#include <cstdint>

#include "bpre/rng.hpp"

namespace bpre {

// Offspring distribution with an atom `a` at zero and a geometric tail with
// ratio `p`:
//
//   q(0) = a,   q(k) = (1-a)(1-p) p^(k-1)  for k >= 1.
//
// Closed under generating-function composition, which is what makes the
// n-step population law computable exactly. Immutable value type; derived
// functionals are cached at construction.
class LinearFractionalLaw {
 public:
  // Requires 0 <= a < 1 and 0 < p < 1; throws std::invalid_argument otherwise.
  LinearFractionalLaw(double a, double p);

  double a() const { return a_; }
  double p() const { return p_; }

  // mean = (1-a)/(1-p)
  double mean() const { return mean_; }
  // X = log mean, the increment of the associated random walk
  double log_mean() const { return log_mean_; }
  // standardized second factorial moment, eta = p/(1-a)
  double eta() const { return eta_; }
  double log_eta() const { return log_eta_; }

  // P(offspring = k). Tail powers go through exp((k-1) log p) so large k
  // degrades gracefully instead of accumulating multiplication drift.
  double pmf(std::uint64_t k) const;

  // f(s) = a + (1-a)(1-p) s / (1 - p s) for s in [0, 1]; throws outside.
  double gen_fn(double s) const;

  // One draw: 0 with probability a, otherwise 1 + Geometric(1-p).
  std::uint64_t sample(RngStream& rng) const;

  // Smallest K with p^K < tail_eps; series truncated at K carry an error
  // below tail_eps by the geometric tail bound.
  std::uint64_t series_horizon(double tail_eps = 1e-15) const;

  bool operator==(const LinearFractionalLaw&) const = default;

 private:
  double a_, p_;
  double mean_, log_mean_, eta_, log_eta_, log_p_;
};

}  // namespace bpre

#endif
