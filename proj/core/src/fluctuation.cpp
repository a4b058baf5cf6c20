#include "bpre/fluctuation.hpp"

#include <cmath>
#include <stdexcept>

#include "bpre/parallel.hpp"

namespace bpre {

WalkStats walk_stats(std::span<const double> walk) {
  if (walk.empty()) throw std::invalid_argument("walk_stats: walk must contain S_0");
  WalkStats st;
  const std::size_t n = walk.size() - 1;
  if (n == 0) return st;
  double lo = walk[1], hi = walk[1];
  for (std::size_t k = 2; k <= n; ++k) {
    if (walk[k] < lo) lo = walk[k];
    if (walk[k] > hi) hi = walk[k];
  }
  st.l_n = lo;
  st.m_n = hi;
  const double floor_val = (lo < walk[0]) ? lo : walk[0];
  for (std::size_t k = 0; k <= n; ++k) {
    if (walk[k] == floor_val) {
      st.tau_n = k;
      break;
    }
  }
  return st;
}

std::size_t first_min_index(std::span<const double> walk, std::size_t k, std::size_t n) {
  if (k > n || n >= walk.size()) throw std::out_of_range("first_min_index: need k <= n < |walk|");
  std::size_t arg = k;
  double lo = walk[k];
  for (std::size_t j = k + 1; j <= n; ++j) {
    if (walk[j] < lo) {
      lo = walk[j];
      arg = j;
    }
  }
  return arg;
}

double window_min(std::span<const double> walk, std::size_t k, std::size_t n) {
  if (k > n || n >= walk.size()) throw std::out_of_range("window_min: need k <= n < |walk|");
  double lo = 0.0;  // j = 0 term
  for (std::size_t j = k + 1; j <= n; ++j) {
    const double d = walk[j] - walk[k];
    if (d < lo) lo = d;
  }
  return lo;
}

IncrementSampler increment_sampler(const TiltedEnvironment& env) {
  if (env.mode() != TiltedEnvironment::Mode::exact)
    throw std::runtime_error("increment_sampler: exact tilted mixture required");
  return [env](RngStream& rng) { return env.sample(rng).log_mean(); };
}

Estimate prob_min_nonneg(const IncrementSampler& inc, std::size_t n, long long replicates,
                         std::uint64_t seed, int workers) {
  if (n < 1) throw std::invalid_argument("prob_min_nonneg: n >= 1 required");
  const auto summary = run_replicates(
      replicates, seed, workers, 1,
      [&](std::uint64_t, RngStream& rng, std::span<double> out) {
        double s = 0.0;
        bool nonneg = true;
        for (std::size_t k = 0; k < n; ++k) {
          s += inc(rng);
          if (s < 0.0) {
            nonneg = false;
            break;
          }
        }
        out[0] = nonneg ? 1.0 : 0.0;
        return 0.0;
      });
  Estimate e;
  e.value = summary.mean[0];
  e.stderror = summary.se[0];
  e.replicates = replicates;
  e.seed = seed;
  e.effective_sample_size = summary.effective_sample_size;
  return e;
}

RenewalEstimate renewal_u(const IncrementSampler& inc, double x, long long truncation_k,
                          long long replicates, std::uint64_t seed, int workers) {
  RenewalEstimate r;
  r.x = x;
  r.truncation_k = truncation_k;
  r.replicates = replicates;
  r.seed = seed;
  if (x < 0.0) {
    r.u_hat = 0.0;
    return r;
  }
  if (truncation_k < 1) throw std::invalid_argument("renewal_u: truncation_k >= 1 required");

  // component 0: sum over all series terms; component 1: last half only
  const long long half = truncation_k / 2;
  const auto summary = run_replicates(
      replicates, seed, workers, 2,
      [&](std::uint64_t, RngStream& rng, std::span<double> out) {
        double s = 0.0, running_max = -1.0;  // any negative init; M_k tracks max of S_1..S_k
        double total = 0.0, tail = 0.0;
        for (long long k = 1; k <= truncation_k; ++k) {
          s += inc(rng);
          if (k == 1 || s > running_max) running_max = s;
          if (running_max >= 0.0) break;  // M_k < 0 can never hold again
          if (-s <= x) {
            total += 1.0;
            if (k > half) tail += 1.0;
          }
        }
        out[0] = total;
        out[1] = tail;
        return 0.0;
      });
  r.u_hat = 1.0 + summary.mean[0];
  r.stderror = summary.se[0];
  r.tail_bound_estimate = summary.mean[1];
  return r;
}

ConditionedPathResult sample_conditioned_nonneg(const TiltedEnvironment& env, std::size_t n,
                                                std::size_t horizon_extension, RngStream& rng,
                                                long long max_rejects) {
  const std::size_t total = n + horizon_extension;
  ConditionedPathResult out;
  EnvPath candidate;
  for (long long attempt = 0; attempt < max_rejects; ++attempt) {
    candidate.clear();
    candidate.reserve(total);
    bool ok = true;
    for (std::size_t k = 0; k < total; ++k) {
      candidate.push_back(env.sample(rng));
      if (candidate.s.back() < 0.0) {
        ok = false;
        break;
      }
    }
    ++out.attempts;
    if (ok) {
      if (horizon_extension == 0) {
        out.path = std::move(candidate);
      } else {
        out.path.clear();
        out.path.reserve(n);
        for (std::size_t k = 0; k < n; ++k) out.path.push_back(candidate.laws[k]);
      }
      // hard assertion: every accepted path keeps the walk nonnegative
      for (std::size_t k = 1; k < out.path.s.size(); ++k)
        if (out.path.s[k] < 0.0)
          throw std::logic_error("sample_conditioned_nonneg: accepted path dips negative");
      return out;
    }
  }
  throw std::runtime_error("sample_conditioned_nonneg: max_rejects exhausted (drift not zero?)");
}

std::vector<double> rescale_path(std::span<const double> walk, double alpha, double sigma) {
  if (walk.empty()) throw std::invalid_argument("rescale_path: walk must contain S_0");
  if (!(alpha > 0.0 && alpha <= 2.0)) throw std::invalid_argument("rescale_path: alpha in (0,2]");
  if (!(sigma > 0.0)) throw std::invalid_argument("rescale_path: sigma > 0 required");
  const std::size_t n = walk.size() - 1;
  const double scale = 1.0 / (sigma * std::pow(static_cast<double>(n < 1 ? 1 : n), 1.0 / alpha));
  std::vector<double> out(walk.size());
  for (std::size_t k = 0; k < walk.size(); ++k) out[k] = walk[k] * scale;
  return out;
}

}  // namespace bpre
