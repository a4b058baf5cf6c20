#ifndef BPRE_FLUCTUATION_HPP
#define BPRE_FLUCTUATION_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bpre/environment.hpp"
#include "bpre/estimate.hpp"
#include "bpre/rng.hpp"

// Fluctuation machinery for the associated random walk: running minima and
// maxima, first-minimum times, the renewal function u, staying-nonnegative
// probabilities, and the rejection sampler approximating the walk (and its
// environment) conditioned to stay nonnegative.

namespace bpre {

// Conventions: `walk` always denotes (S_0, ..., S_n) with S_0 = 0, i.e. the
// s array of an EnvPath. L_n and M_n run over k = 1..n with L_0 = M_0 = 0;
// first-minimum times break ties toward the smallest index.
struct WalkStats {
  double l_n = 0.0;  // min_{1<=k<=n} S_k (0 for n = 0)
  double m_n = 0.0;  // max_{1<=k<=n} S_k (0 for n = 0)
  std::size_t tau_n = 0;  // first k in [0, n] with S_k = min(0, L_n)
};

WalkStats walk_stats(std::span<const double> walk);

// tau_{k,n}: first index j in [k, n] attaining min{S_k, ..., S_n}.
std::size_t first_min_index(std::span<const double> walk, std::size_t k, std::size_t n);

// L_{k,n} = min_{0<=j<=n-k} (S_{k+j} - S_k); L_{k,k} = 0.
double window_min(std::span<const double> walk, std::size_t k, std::size_t n);

using IncrementSampler = std::function<double(RngStream&)>;

// Increment law of the associated walk under the tilted environment measure.
IncrementSampler increment_sampler(const TiltedEnvironment& env);

// Monte Carlo estimate of P(L_n >= 0) with binomial standard error.
Estimate prob_min_nonneg(const IncrementSampler& inc, std::size_t n, long long replicates,
                         std::uint64_t seed, int workers = 0);

struct RenewalEstimate {
  double x = 0.0;
  double u_hat = 0.0;
  double stderror = 0.0;
  long long truncation_k = 0;
  // contribution of the last half of the series terms; a proxy for the
  // truncated tail, which has no computable bound here
  double tail_bound_estimate = 0.0;
  long long replicates = 0;
  std::uint64_t seed = 0;
};

// u(x) = 1 + sum_{k>=1} P(-S_k <= x, M_k < 0) for x >= 0, truncated at
// truncation_k; u(x) = 0 for x < 0 (exact, no simulation).
RenewalEstimate renewal_u(const IncrementSampler& inc, double x, long long truncation_k,
                          long long replicates, std::uint64_t seed, int workers = 0);

struct ConditionedPathResult {
  EnvPath path;            // first n steps of an accepted length-(n+B) path
  long long attempts = 0;  // total paths drawn until acceptance
};

// Approximate draw from the environment law conditioned to keep the walk
// nonnegative: rejection on {L_{n+B} >= 0}, returning the first n steps.
// Larger B pushes the law of the kept prefix toward the h-transform limit.
// Throws std::runtime_error when max_rejects is exhausted.
ConditionedPathResult sample_conditioned_nonneg(const TiltedEnvironment& env, std::size_t n,
                                                std::size_t horizon_extension, RngStream& rng,
                                                long long max_rejects = 100000000LL);

// Grid values of the rescaled walk S^n_t = S_{floor(nt)} / (sigma n^{1/alpha})
// at t = k/n, k = 0..n. The slowly varying factor is taken constant (= 1),
// which is the finite-variance normalization when sigma is the tilted
// standard deviation.
std::vector<double> rescale_path(std::span<const double> walk, double alpha, double sigma);

}  // namespace bpre

#endif
