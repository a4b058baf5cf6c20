#ifndef BPRE_EXPERIMENTS_HPP
#define BPRE_EXPERIMENTS_HPP

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpre/environment.hpp"
#include "bpre/estimate.hpp"
#include "bpre/fluctuation.hpp"
#include "bpre/quenched.hpp"

// Importance-sampling estimators and executable checks for the limit
// theorems. Every conditional-given-{Z_n = 1} quantity is a ratio of
// tilted-measure expectations of closed-form quenched functionals; nothing
// is ever estimated by waiting for {Z_n = 1} in forward simulation.

namespace bpre {

struct ExperimentBudget {
  long long replicates = 100000;
  std::uint64_t seed = 0;
  int workers = 0;  // <= 0: hardware concurrency
};

struct RegimeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Generic primitive: Monte Carlo average of G over tilted environment paths
// of length n, optionally conditioned on {L_n >= 0}. Non-finite G values
// abort with a description of the offending path.
Estimate tilted_expectation(const TiltedEnvironment& env, std::size_t n,
                            const std::function<double(const EnvPath&)>& g,
                            const ExperimentBudget& budget, bool condition_min_nonneg = false);

// P(Z_n = z) = gamma^n E_tilted[survival^2 H^{z-1}]. The linear value may
// underflow for large n; diagnostics carry log_value as the authoritative
// log-scale result.
Estimate annealed_point_prob(const EnvironmentModel& env, std::size_t n, std::uint64_t z,
                             const ExperimentBudget& budget);

// --- strongly supercritical checks ---------------------------------------

struct StrongRateReport {
  std::vector<int> n_grid;
  std::vector<double> r_hat;  // gamma^{-n} P(Z_n = 1) = E_tilted[survival_n^2]
  std::vector<double> r_se;
  double theta_hat = 0.0;  // limit constant estimate, r_hat at the largest n
  double theta_se = 0.0;
  bool monotone_within_3se = false;  // r_hat nonincreasing across the grid
  double stabilization_gap = 0.0;    // r(n_half) - r(n_max), n_half ~ n_max/2
  double stabilization_se = 0.0;
  long long replicates = 0;
  std::uint64_t seed = 0;
};

StrongRateReport check_strong_rate(const EnvironmentModel& env, const std::vector<int>& n_grid,
                                   const ExperimentBudget& budget);

struct UniformConditionalReport {
  int n = 0;
  int c = 0;
  ConditionalDistribution dist;  // P(Z_n = k | 1 <= Z_n <= c), k = 1..c
  double max_abs_dev_from_uniform = 0.0;
  double max_mass_se = 0.0;
  long long replicates = 0;
  std::uint64_t seed = 0;
};

// Common-random-path estimator of P(Z_n = k | 1 <= Z_n <= c); accepts both
// strongly and intermediately supercritical environments.
UniformConditionalReport check_uniform_conditional(const EnvironmentModel& env, int n, int c,
                                                   const ExperimentBudget& budget);

struct StrongConditionalPathReport {
  int n = 0;
  double t = 0.0;
  int z_max = 0;
  ConditionalDistribution lhs;  // P(Z_{floor(nt)} = z | Z_n = 1)
  ConditionalDistribution rhs;  // r_z at survival horizon N = n
  ConditionalDistribution rhs_half;  // r_z at horizon n/2 (stability diagnostic)
  double rhs_tail_mass = 0.0;        // 1 - sum_{z<=z_max} rhs_z (exact complement)
  double rhs_half_gap_tv = 0.0;      // TV(rhs, rhs_half)
  double tv = 0.0;                   // TV(lhs, rhs) over z <= z_max
  double tv_combined_se = 0.0;
  double t_lo = 0.0, t_hi = 0.0;     // t-independence pair
  double t_independence_tv = 0.0;    // TV between the two t estimates
  double t_independence_se = 0.0;    // from per-path differences, so shared noise cancels
  long long replicates = 0;
  std::uint64_t seed = 0;
};

StrongConditionalPathReport check_strong_conditional_path(const EnvironmentModel& env, int n,
                                                          double t, int z_max,
                                                          const ExperimentBudget& budget,
                                                          double t_lo = 0.3, double t_hi = 0.7);

// --- intermediately supercritical checks ----------------------------------

struct IntermediateRateReport {
  std::vector<int> n_grid;
  std::vector<double> theta_hat;  // E_tilted[survival_n^2] / P(L_n >= 0)
  std::vector<double> theta_se;
  std::vector<double> p_min_nonneg;  // P(L_n >= 0)
  std::vector<double> p_min_se;
  std::vector<double> sqrtn_p_min;  // sqrt(n) P(L_n >= 0), should flatten
  bool all_positive = false;
  double stabilization_gap = 0.0;  // theta(n_max) - theta(n_half)
  double stabilization_se = 0.0;   // full delta method over the 4 correlated means
  double sqrtn_gap = 0.0;          // sqrt(n_max) p(n_max) - sqrt(n_half) p(n_half)
  double sqrtn_gap_se = 0.0;
  long long replicates = 0;
  std::uint64_t seed = 0;
};

IntermediateRateReport check_intermediate_rate(const EnvironmentModel& env,
                                               const std::vector<int>& n_grid,
                                               const ExperimentBudget& budget);

struct MeanderReport {
  int n = 0;
  double sigma_tilted = 0.0;
  double ks_rayleigh = 0.0;  // weighted KS distance of S_n/(sigma sqrt n) to Rayleigh
  double negative_endpoint_mass = 0.0;
  double ess = 0.0;
  // two-sample KS of the t = 1/2 marginal against walk paths conditioned on
  // {L_n >= 0}; an asymptotically equivalent surrogate, diagnostic only
  double surrogate_ks_half_time = 0.0;
  long long surrogate_replicates = 0;
  long long replicates = 0;
  std::uint64_t seed = 0;
};

MeanderReport check_meander(const EnvironmentModel& env, int n, const ExperimentBudget& budget,
                            long long surrogate_replicates = 20000);

struct MinimumConditionalReport {
  int n = 0;
  double t = 0.0;
  int z_max = 0;
  int horizon_m = 0;  // survival horizon M for q(z)
  int horizon_b = 0;  // rejection horizon extension B
  ConditionalDistribution lhs;       // P(Z_{tau_{floor(nt),n}} = z | Z_n = 1)
  ConditionalDistribution rhs;       // q(z) under the conditioned-environment sampler
  ConditionalDistribution rhs_half;  // q(z) at horizon M/2
  double rhs_tail_mass = 0.0;
  double rhs_half_gap_tv = 0.0;  // two-level horizon stability
  double tv = 0.0;
  double tv_combined_se = 0.0;
  double acceptance_rate = 0.0;   // of the {L_{M+B} >= 0} rejection sampler
  double lhs_small_z_mass = 0.0;  // P(Z_tau <= 10 | Z_n = 1)
  long long replicates = 0;
  long long rhs_replicates = 0;
  std::uint64_t seed = 0;
};

MinimumConditionalReport check_minimum_conditional(const EnvironmentModel& env, int n, double t,
                                                   int z_max, int horizon_m, int horizon_b,
                                                   const ExperimentBudget& budget,
                                                   long long rhs_replicates);

struct ThetaSeriesReport {
  int k_max = 0;
  int inner_horizon = 0;   // M for the inner extinction-probability pool
  int horizon_b = 0;
  long long inner_pool = 0;  // number of conditioned environments in the pool
  std::vector<double> terms;
  std::vector<double> term_se;
  double theta_series = 0.0;
  double theta_series_se = 0.0;
  double tail_last_quarter = 0.0;  // mass of the last quarter of terms (decay diagnostic)
  double pool_split_gap = 0.0;     // first-half vs second-half inner pool difference
  // optional cross-check against the ratio estimator; NaN when not attached
  double theta_ratio = 0.0;
  double theta_ratio_se = 0.0;
  bool has_ratio_cross_check = false;
  long long replicates = 0;
  std::uint64_t seed = 0;
};

ThetaSeriesReport estimate_theta_series(const EnvironmentModel& env, int k_max, int inner_horizon_m,
                                        int horizon_b, const ExperimentBudget& budget,
                                        long long inner_pool = 256);

struct EarlyMinimumReport {
  int n = 0;
  std::vector<int> z_values;
  std::vector<int> m_grid;
  // ratio[zi][mi] = P(Z_n = z, tau_n > m) / (gamma^n P(L_n >= 0))
  std::vector<std::vector<double>> ratio;
  std::vector<std::vector<double>> ratio_se;
  bool monotone_nonincreasing = false;  // exact pathwise property of the estimator
  double p_min_nonneg = 0.0;
  long long replicates = 0;
  std::uint64_t seed = 0;
};

EarlyMinimumReport check_early_minimum(const EnvironmentModel& env, int n,
                                       const std::vector<int>& z_values,
                                       const std::vector<int>& m_grid,
                                       const ExperimentBudget& budget);

// --- fluctuation-side composite -------------------------------------------

struct WalkFluctuationReport {
  std::vector<int> n_grid;
  std::vector<double> p_min_nonneg;
  std::vector<double> p_min_se;
  std::vector<double> sqrtn_p_min;
  std::vector<double> x_grid;
  std::vector<RenewalEstimate> renewal;         // at truncation K
  std::vector<RenewalEstimate> renewal_double;  // at 2K (stability)
  double u_at_zero = 0.0;                       // should be exactly 1
  // Sparre-Andersen reference: standard-normal increments vs C(2n,n) 4^{-n}
  std::vector<int> sa_n;
  std::vector<double> sa_estimate;
  std::vector<double> sa_se;
  std::vector<double> sa_exact;
  long long replicates = 0;
  std::uint64_t seed = 0;
};

WalkFluctuationReport run_walk_fluctuation(const EnvironmentModel& env,
                                           const std::vector<int>& n_grid,
                                           const std::vector<double>& x_grid, long long renewal_k,
                                           const ExperimentBudget& budget);

// P(min_{1<=k<=n} S_k >= 0) for symmetric continuous increments.
double sparre_andersen_exact(long long n);

}  // namespace bpre

#endif
