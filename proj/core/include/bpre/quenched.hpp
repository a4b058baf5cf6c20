#ifndef BPRE_QUENCHED_HPP
#define BPRE_QUENCHED_HPP

#include <cstdint>
#include <vector>

#include "bpre/env_path.hpp"
#include "bpre/log_space.hpp"
#include "bpre/rng.hpp"

// Exact conditional law of the population Z_n given a realized environment.
// For linear fractional offspring laws the n-step law is itself linear
// fractional:
//
//   P(Z_n > 0 | env) = 1 / D_n,      D_n = e^{-S_n} + A_n,
//   A_n = sum_{k=0}^{n-1} eta_{k+1} e^{-S_k},
//   P(Z_n = z | env) = e^{-S_n} P(Z_n > 0 | env)^2 H_n^{z-1},  H_n = A_n / D_n.
//
// S_n drifts linearly in n, so every quantity is carried in log space and the
// denominator is assembled by log-sum-exp.

namespace bpre {

struct QuenchedLaw {
  int n = 0;
  double log_e_sn = 0.0;         // -S_n
  double log_denominator = 0.0;  // log D_n
  double log_survival = 0.0;     // log P(Z_n > 0 | env) = -log D_n
  double log_h = neg_inf;        // log H_n; meaningless when h_defined is false
  bool h_defined = false;        // false for n = 0 (no geometric tail yet)

  double survival() const { return std::exp(log_survival); }
  // log(1 - H_n) = -S_n - log D_n, exact complement of the tail ratio
  double log_one_minus_h() const { return log_e_sn - log_denominator; }
  double h() const { return std::exp(log_h); }
  // log P(Z_n = 0 | env)
  double log_extinction() const { return log1mexp(log_survival); }
  double extinction() const { return -std::expm1(log_survival); }
};

// Streaming builder: push laws one generation at a time and read off the
// quenched law of any prefix. This is the Monte Carlo hot path.
class QuenchedAccumulator {
 public:
  void push(const LinearFractionalLaw& q) {
    log_a_ = log_add(log_a_, q.log_eta() - s_);
    s_ += q.log_mean();
    if (s_ < min_s_) min_s_ = s_;
    ++n_;
  }

  int n() const { return n_; }
  double s() const { return s_; }
  // min_{0 <= k <= n} S_k (includes S_0 = 0)
  double min_s() const { return min_s_; }
  double log_a() const { return log_a_; }
  double log_survival() const { return -log_add(-s_, log_a_); }

  // Packages the current prefix law. Verifies the pathwise Markov bound
  // P(Z_n > 0 | env) <= exp(min_k S_k); a violation means the numerics are
  // broken and throws std::logic_error.
  QuenchedLaw law() const;

 private:
  double s_ = 0.0;
  double min_s_ = 0.0;
  double log_a_ = neg_inf;
  int n_ = 0;
};

// Assembles the law from the accumulator state (S_n, log A_n, min_k S_k),
// enforcing the pathwise Markov bound. Building block for prefix evaluation.
QuenchedLaw assemble_quenched_law(int n, double s_n, double log_a, double min_s);

QuenchedLaw quenched_law(const EnvPath& path);

// Quenched law of the window (Q_{k+1}, ..., Q_m), i.e. of Z_{m-k} under the
// environment shifted by k generations.
QuenchedLaw quenched_law_window(const EnvPath& path, std::size_t k, std::size_t m);

// P(Z_n = z | env) for z >= 1, n >= 1.
double log_prob_eq(const QuenchedLaw& ql, std::uint64_t z);
double prob_eq(const QuenchedLaw& ql, std::uint64_t z);

// Law of Z_n given Z_0 = z0: the z0 ancestral subtrees are i.i.d., so the
// count of surviving subtrees is Binomial(z0, survival) and, conditioned on b
// survivors, the total is b plus a negative-binomial overshoot with ratio H.
// k = 0 reduces to extinction^z0.
double prob_eq_from(const QuenchedLaw& ql, std::uint64_t z0, std::uint64_t k);
double log_prob_eq_from(const QuenchedLaw& ql, std::uint64_t z0, std::uint64_t k);

// P(Z_n > 0 | env, Z_0 = z0) = 1 - extinction^z0
double survival_from(const QuenchedLaw& ql, std::uint64_t z0);

// f_{0,n}(s) = f_1(f_2(...f_n(s)...)); the independent generating-function
// route to the same law: 1 - f_{0,n}(0) equals survival.
double iterate_gen_fn(const EnvPath& path, double s);

// f_{k,n}(s) composed over generations k+1..n; f_{0,n} = f_{0,k} o f_{k,n}.
double sub_path_gen_fn(const EnvPath& path, std::size_t k, std::size_t n, double s);

struct ForwardTrajectory {
  std::vector<std::uint64_t> z;  // z[0] = z0, one entry per completed generation
  bool truncated = false;        // population exceeded the cap; later entries dropped
};

// Direct simulation of the population through the given environment;
// independent sampling oracle for the closed forms above.
ForwardTrajectory forward_simulate(const EnvPath& path, std::uint64_t z0, RngStream& rng,
                                   std::uint64_t population_cap = 1000000000ULL);

}  // namespace bpre

#endif
