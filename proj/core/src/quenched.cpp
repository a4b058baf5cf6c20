#include "bpre/quenched.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bpre {

namespace {

// Slack for the pathwise Markov-bound assertion: pure rounding noise only.
constexpr double kMarkovSlack = 1e-9;

double log_binom(std::uint64_t n, std::uint64_t k) {
  if (k > n) return neg_inf;
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

}  // namespace

EnvPath EnvPath::shifted(std::size_t k) const {
  if (k > size()) throw std::out_of_range("EnvPath::shifted: k > n");
  EnvPath out;
  out.reserve(size() - k);
  for (std::size_t i = k; i < size(); ++i) out.push_back(laws[i]);
  return out;
}

QuenchedLaw assemble_quenched_law(int n, double s_n, double log_a, double min_s) {
  QuenchedLaw ql;
  ql.n = n;
  ql.log_e_sn = -s_n;
  ql.log_denominator = log_add(-s_n, log_a);
  ql.log_survival = -ql.log_denominator;
  if (n >= 1) {
    ql.log_h = log_a - ql.log_denominator;
    ql.h_defined = true;
  }
  if (ql.log_survival > min_s + kMarkovSlack) {
    throw std::logic_error("quenched law violates Markov bound: log survival " +
                           std::to_string(ql.log_survival) + " > min S " + std::to_string(min_s) +
                           " at n=" + std::to_string(n));
  }
  return ql;
}

QuenchedLaw QuenchedAccumulator::law() const { return assemble_quenched_law(n_, s_, log_a_, min_s_); }

QuenchedLaw quenched_law(const EnvPath& path) {
  QuenchedAccumulator acc;
  for (const auto& q : path.laws) acc.push(q);
  return acc.law();
}

QuenchedLaw quenched_law_window(const EnvPath& path, std::size_t k, std::size_t m) {
  if (k > m || m > path.size()) throw std::out_of_range("quenched_law_window: need k <= m <= n");
  QuenchedAccumulator acc;
  for (std::size_t i = k; i < m; ++i) acc.push(path.laws[i]);
  return acc.law();
}

double log_prob_eq(const QuenchedLaw& ql, std::uint64_t z) {
  if (z < 1) throw std::invalid_argument("prob_eq: z >= 1 required");
  if (ql.n < 1) throw std::invalid_argument("prob_eq: n >= 1 required");
  return ql.log_e_sn + 2.0 * ql.log_survival + static_cast<double>(z - 1) * ql.log_h;
}

double prob_eq(const QuenchedLaw& ql, std::uint64_t z) { return std::exp(log_prob_eq(ql, z)); }

double log_prob_eq_from(const QuenchedLaw& ql, std::uint64_t z0, std::uint64_t k) {
  if (z0 < 1) throw std::invalid_argument("prob_eq_from: z0 >= 1 required");
  const double log_ext = ql.log_extinction();
  if (k == 0) return static_cast<double>(z0) * log_ext;
  if (ql.n < 1) throw std::invalid_argument("prob_eq_from: n >= 1 required for k >= 1");

  // sum over b = number of surviving subtrees; each survivor contributes
  // 1 + Geometric(1 - H), so the overshoot k - b is NegBinomial(b, H).
  const double log_surv = ql.log_survival;
  const double log_h = ql.log_h;
  const double log_1mh = ql.log_one_minus_h();
  const std::uint64_t b_max = (z0 < k) ? z0 : k;

  double max_term = neg_inf;
  std::vector<double> terms;
  terms.reserve(b_max);
  for (std::uint64_t b = 1; b <= b_max; ++b) {
    const double t = log_binom(z0, b) + static_cast<double>(b) * log_surv +
                     static_cast<double>(z0 - b) * log_ext + log_binom(k - 1, b - 1) +
                     static_cast<double>(b) * log_1mh + static_cast<double>(k - b) * log_h;
    terms.push_back(t);
    if (t > max_term) max_term = t;
  }
  if (max_term == neg_inf) return neg_inf;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - max_term);
  return max_term + std::log(acc);
}

double prob_eq_from(const QuenchedLaw& ql, std::uint64_t z0, std::uint64_t k) {
  return std::exp(log_prob_eq_from(ql, z0, k));
}

double survival_from(const QuenchedLaw& ql, std::uint64_t z0) {
  if (z0 < 1) throw std::invalid_argument("survival_from: z0 >= 1 required");
  return -std::expm1(static_cast<double>(z0) * ql.log_extinction());
}

double iterate_gen_fn(const EnvPath& path, double s) {
  return sub_path_gen_fn(path, 0, path.size(), s);
}

double sub_path_gen_fn(const EnvPath& path, std::size_t k, std::size_t n, double s) {
  if (k > n || n > path.size()) throw std::out_of_range("sub_path_gen_fn: need k <= n <= path length");
  double v = s;
  for (std::size_t i = n; i > k; --i) v = path.laws[i - 1].gen_fn(v);
  return v;
}

ForwardTrajectory forward_simulate(const EnvPath& path, std::uint64_t z0, RngStream& rng,
                                   std::uint64_t population_cap) {
  ForwardTrajectory out;
  out.z.reserve(path.size() + 1);
  out.z.push_back(z0);
  std::uint64_t z = z0;
  for (const auto& q : path.laws) {
    std::uint64_t next = 0;
    for (std::uint64_t i = 0; i < z; ++i) {
      next += q.sample(rng);
      if (next > population_cap) {
        out.truncated = true;
        return out;
      }
    }
    z = next;
    out.z.push_back(z);
    if (z == 0) {
      // absorbing state: fill the rest without sampling
      while (out.z.size() <= path.size()) out.z.push_back(0);
      return out;
    }
  }
  return out;
}

}  // namespace bpre
