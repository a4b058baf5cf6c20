#include "bpre/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "bpre/log_space.hpp"
#include "bpre/parallel.hpp"

namespace bpre {

namespace {

// Phase tags for deriving independent sub-seeds from one config seed.
constexpr std::uint64_t kSeedLhs = 0x1u;
constexpr std::uint64_t kSeedRhs = 0x2u;
constexpr std::uint64_t kSeedPool = 0x3u;
constexpr std::uint64_t kSeedSurrogate = 0x4u;

std::uint64_t phase_seed(std::uint64_t seed, std::uint64_t phase) {
  return RngStream::mix(seed, phase);
}

RegimeReport require_regime(const EnvironmentModel& env, Regime wanted, const char* who) {
  const RegimeReport r = regime_report(env);
  if (r.regime != wanted)
    throw RegimeMismatch(std::string(who) + ": environment is " + to_string(r.regime) +
                         ", expected " + to_string(wanted));
  return r;
}

RegimeReport require_supercritical_regime(const EnvironmentModel& env, const char* who) {
  const RegimeReport r = regime_report(env);
  if (r.regime == Regime::other)
    throw RegimeMismatch(std::string(who) +
                         ": environment is neither strongly nor intermediately supercritical");
  return r;
}

// Path plus prefix state (log A_k, running minimum) so the quenched law of
// any prefix is O(1) after one O(n) build.
struct PathWorkspace {
  EnvPath path;
  std::vector<double> log_a;  // log_a[k] after k laws; log_a[0] = -inf
  std::vector<double> min_s;  // min_{0<=j<=k} S_j

  void build(const TiltedEnvironment& env, std::size_t n, RngStream& rng) {
    path.clear();
    path.reserve(n);
    log_a.assign(1, neg_inf);
    min_s.assign(1, 0.0);
    log_a.reserve(n + 1);
    min_s.reserve(n + 1);
    for (std::size_t k = 0; k < n; ++k) {
      const LinearFractionalLaw q = env.sample(rng);
      const double la = log_add(log_a.back(), q.log_eta() - path.s.back());
      path.push_back(q);
      log_a.push_back(la);
      min_s.push_back(std::min(min_s.back(), path.s.back()));
    }
  }

  QuenchedLaw prefix_law(std::size_t k) const {
    return assemble_quenched_law(static_cast<int>(k), path.s[k], log_a[k], min_s[k]);
  }
};

// se of a/b from the means, their ses, and the mean of the product a*b
// (all over the same replicates).
double ratio_se(double a, double se_a, double b, double se_b, double mean_ab, long long reps) {
  const double r = a / b;
  const double cov_of_means = (mean_ab - a * b) / static_cast<double>(reps);
  const double v = se_a * se_a + r * r * se_b * se_b - 2.0 * r * cov_of_means;
  return std::sqrt(std::max(0.0, v)) / std::abs(b);
}

std::vector<int> checked_grid(const std::vector<int>& grid, const char* who) {
  if (grid.empty()) throw std::invalid_argument(std::string(who) + ": empty n grid");
  std::vector<int> g = grid;
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  if (g.front() < 1) throw std::invalid_argument(std::string(who) + ": grid entries must be >= 1");
  return g;
}

// index of the grid point closest to n_max / 2
std::size_t half_index(const std::vector<int>& grid) {
  const double target = grid.back() / 2.0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (std::abs(grid[i] - target) < std::abs(grid[best] - target)) best = i;
  return best;
}

std::string describe_path(const EnvPath& path) {
  std::ostringstream os;
  os << "n=" << path.size() << " S_n=" << path.s.back() << " atoms:";
  const std::size_t show = std::min<std::size_t>(path.size(), 8);
  for (std::size_t i = 0; i < show; ++i)
    os << " (" << path.laws[i].a() << "," << path.laws[i].p() << ")";
  if (path.size() > show) os << " ...";
  return os.str();
}

// Weighted one-sample Kolmogorov-Smirnov distance against a CDF. Ties are
// grouped; both sides of every jump are checked.
double weighted_ks(std::vector<std::pair<double, double>>& xw,
                   const std::function<double(double)>& cdf) {
  std::sort(xw.begin(), xw.end());
  double total = 0.0;
  for (const auto& [x, w] : xw) total += w;
  double cum = 0.0;
  double d = 0.0;
  std::size_t i = 0;
  while (i < xw.size()) {
    const double x = xw[i].first;
    const double before = cum / total;
    std::size_t j = i;
    while (j < xw.size() && xw[j].first == x) {
      cum += xw[j].second;
      ++j;
    }
    const double after = cum / total;
    const double f = cdf(x);
    d = std::max(d, std::max(std::abs(before - f), std::abs(after - f)));
    i = j;
  }
  return d;
}

// Two-sample KS between a weighted sample and an unweighted one.
double two_sample_ks(std::vector<std::pair<double, double>>& xw, std::vector<double>& y) {
  std::sort(xw.begin(), xw.end());
  std::sort(y.begin(), y.end());
  double wtot = 0.0;
  for (const auto& [x, w] : xw) wtot += w;
  const double ytot = static_cast<double>(y.size());
  double cw = 0.0, cy = 0.0, d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < xw.size() || j < y.size()) {
    const double xv = (i < xw.size()) ? xw[i].first : std::numeric_limits<double>::infinity();
    const double yv = (j < y.size()) ? y[j] : std::numeric_limits<double>::infinity();
    const double v = std::min(xv, yv);
    while (i < xw.size() && xw[i].first == v) cw += xw[i++].second;
    while (j < y.size() && y[j] == v) {
      cy += 1.0;
      ++j;
    }
    d = std::max(d, std::abs(cw / wtot - cy / ytot));
  }
  return d;
}

}  // namespace

TvComparison tv_distance(const ConditionalDistribution& a, const ConditionalDistribution& b) {
  if (a.support != b.support) throw std::invalid_argument("tv_distance: support mismatch");
  TvComparison out;
  double var = 0.0;
  for (std::size_t i = 0; i < a.masses.size(); ++i) {
    out.tv += std::abs(a.masses[i] - b.masses[i]);
    var += a.mass_se[i] * a.mass_se[i] + b.mass_se[i] * b.mass_se[i];
  }
  out.tv *= 0.5;
  out.combined_se = 0.5 * std::sqrt(var);
  return out;
}

Estimate tilted_expectation(const TiltedEnvironment& env, std::size_t n,
                            const std::function<double(const EnvPath&)>& g,
                            const ExperimentBudget& budget, bool condition_min_nonneg) {
  const std::size_t dim = condition_min_nonneg ? 2 : 1;
  const auto summary = run_replicates(
      budget.replicates, budget.seed, budget.workers, dim,
      [&](std::uint64_t, RngStream& rng, std::span<double> out) {
        thread_local EnvPath path;
        env.sample_path_into(path, n, rng);
        const double v = g(path);
        if (!std::isfinite(v))
          throw std::runtime_error("tilted_expectation: non-finite functional value on path " +
                                   describe_path(path));
        if (condition_min_nonneg) {
          double l = 0.0;
          for (std::size_t k = 1; k < path.s.size(); ++k) l = std::min(l, path.s[k]);
          const double ind = (l >= 0.0) ? 1.0 : 0.0;
          out[0] = v * ind;
          out[1] = ind;
        } else {
          out[0] = v;
        }
        return path.log_sampling_weight;
      });

  Estimate e;
  e.replicates = budget.replicates;
  e.seed = budget.seed;
  e.effective_sample_size = summary.effective_sample_size;
  if (condition_min_nonneg) {
    const double a = summary.mean[0], b = summary.mean[1];
    if (b <= 0.0) throw std::runtime_error("tilted_expectation: conditioning event never occurred");
    e.value = a / b;
    // A = G*1, B = 1 share the indicator, so E[AB] = E[A]
    e.stderror = ratio_se(a, summary.se[0], b, summary.se[1], a, budget.replicates);
    e.diagnostics["acceptance"] = b;
  } else {
    e.value = summary.mean[0];
    e.stderror = summary.se[0];
  }
  return e;
}

Estimate annealed_point_prob(const EnvironmentModel& env, std::size_t n, std::uint64_t z,
                             const ExperimentBudget& budget) {
  if (n < 1) throw std::invalid_argument("annealed_point_prob: n >= 1 required");
  if (z < 1) throw std::invalid_argument("annealed_point_prob: z >= 1 required");
  const TiltedEnvironment tilted = tilt(env);
  const double log_gamma = std::log(tilted.gamma());

  const auto summary = run_replicates(
      budget.replicates, budget.seed, budget.workers, 1,
      [&](std::uint64_t, RngStream& rng, std::span<double> out) {
        QuenchedAccumulator acc;
        for (std::size_t k = 0; k < n; ++k) acc.push(tilted.sample(rng));
        const QuenchedLaw ql = acc.law();
        out[0] = std::exp(2.0 * ql.log_survival + static_cast<double>(z - 1) * ql.log_h);
        return 0.0;
      });

  const double scale = std::exp(static_cast<double>(n) * log_gamma);
  Estimate e;
  e.value = scale * summary.mean[0];
  e.stderror = scale * summary.se[0];
  e.replicates = budget.replicates;
  e.seed = budget.seed;
  e.effective_sample_size = summary.effective_sample_size;
  e.diagnostics["log_value"] = static_cast<double>(n) * log_gamma + std::log(summary.mean[0]);
  e.diagnostics["tilted_mean"] = summary.mean[0];
  e.diagnostics["tilted_se"] = summary.se[0];
  e.diagnostics["gamma"] = tilted.gamma();
  return e;
}

StrongRateReport check_strong_rate(const EnvironmentModel& env, const std::vector<int>& n_grid,
                                   const ExperimentBudget& budget) {
  require_regime(env, Regime::strongly_supercritical, "check_strong_rate");
  const std::vector<int> grid = checked_grid(n_grid, "check_strong_rate");
  const TiltedEnvironment tilted = tilt(env);
  const std::size_t G = grid.size();
  const std::size_t h = half_index(grid);

  // layout: [0,G) survival^2 at grid points; [G, 2G-1) adjacent differences;
  // [2G-1] half-vs-max difference
  const std::size_t dim = G + (G - 1) + 1;
  const auto summary = run_replicates(
      budget.replicates, budget.seed, budget.workers, dim,
      [&](std::uint64_t, RngStream& rng, std::span<double> out) {
        QuenchedAccumulator acc;
        std::size_t gi = 0;
        for (int k = 1; k <= grid.back(); ++k) {
          acc.push(tilted.sample(rng));
          if (k == grid[gi]) {
            out[gi] = std::exp(2.0 * acc.log_survival());
            ++gi;
          }
        }
        for (std::size_t j = 0; j + 1 < G; ++j) out[G + j] = out[j] - out[j + 1];
        out[2 * G - 1] = out[h] - out[G - 1];
        return 0.0;
      });

  StrongRateReport rep;
  rep.n_grid = grid;
  rep.r_hat.assign(summary.mean.begin(), summary.mean.begin() + G);
  rep.r_se.assign(summary.se.begin(), summary.se.begin() + G);
  rep.theta_hat = summary.mean[G - 1];
  rep.theta_se = summary.se[G - 1];
  rep.monotone_within_3se = true;
  for (std::size_t j = 0; j + 1 < G; ++j)
    if (summary.mean[G + j] < -3.0 * summary.se[G + j]) rep.monotone_within_3se = false;
  rep.stabilization_gap = summary.mean[2 * G - 1];
  rep.stabilization_se = summary.se[2 * G - 1];
  rep.replicates = budget.replicates;
  rep.seed = budget.seed;
  return rep;
}

UniformConditionalReport check_uniform_conditional(const EnvironmentModel& env, int n, int c,
                                                   const ExperimentBudget& budget) {
  if (n < 1 || c < 1) throw std::invalid_argument("check_uniform_conditional: n, c >= 1 required");
  require_supercritical_regime(env, "check_uniform_conditional");
  const TiltedEnvironment tilted = tilt(env);
  const std::size_t C = static_cast<std::size_t>(c);

  // layout: [0,C) a_k = survival^2 H^{k-1}; [C] T = sum_k a_k; [C+1, 2C+1) a_k*T
  const std::size_t dim = 2 * C + 1;
  const auto summary = run_replicates(
      budget.replicates, budget.seed, budget.workers, dim,
      [&](std::uint64_t, RngStream& rng, std::span<double> out) {
        QuenchedAccumulator acc;
        for (int k = 0; k < n; ++k) acc.push(tilted.sample(rng));
        const QuenchedLaw ql = acc.law();
        const double s2 = std::exp(2.0 * ql.log_survival);
        const double hh = ql.h();
        double pw = 1.0, t = 0.0;
        for (std::size_t k = 0; k < C; ++k) {
          out[k] = s2 * pw;
          t += out[k];
          pw *= hh;
        }
        out[C] = t;
        for (std::size_t k = 0; k < C; ++k) out[C + 1 + k] = out[k] * t;
        return 0.0;
      });

  UniformConditionalReport rep;
  rep.n = n;
  rep.c = c;
  const double t_mean = summary.mean[C];
  for (std::size_t k = 0; k < C; ++k) {
    const double mass = summary.mean[k] / t_mean;
    const double se = ratio_se(summary.mean[k], summary.se[k], t_mean, summary.se[C],
                               summary.mean[C + 1 + k], budget.replicates);
    rep.dist.support.push_back(static_cast<int>(k) + 1);
    rep.dist.masses.push_back(mass);
    rep.dist.mass_se.push_back(se);
    rep.max_abs_dev_from_uniform =
        std::max(rep.max_abs_dev_from_uniform, std::abs(mass - 1.0 / static_cast<double>(c)));
    rep.max_mass_se = std::max(rep.max_mass_se, se);
  }
  rep.replicates = budget.replicates;
  rep.seed = budget.seed;
  return rep;
}

namespace {

// e^{S_suffix} P_z(Z_len = 1 | suffix): z survival^2 extinction^{z-1} for
// len >= 1, the z = 1 indicator for an empty suffix.
struct SuffixFactor {
  double surv2 = 1.0;
  double ext = 0.0;
  bool empty = false;
};

SuffixFactor suffix_factor(const EnvPath& path, std::size_t from, std::size_t to) {
  SuffixFactor f;
  if (from == to) {
    f.empty = true;
    return f;
  }
  const QuenchedLaw ql = quenched_law_window(path, from, to);
  f.surv2 = std::exp(2.0 * ql.log_survival);
  f.ext = ql.extinction();
  return f;
}

// joint functional e^{S_n} P(Z_prefix = z | env) P_z(Z_suffix = 1 | env),
// filled for z = 1..z_max
void fill_split_numerators(const QuenchedLaw& pre, const SuffixFactor& suf, std::size_t z_max,
                           std::span<double> out) {
  const double s2_pre = std::exp(2.0 * pre.log_survival);
  const double h_pre = pre.h();
  if (suf.empty) {
    double pw = 1.0;
    for (std::size_t z = 1; z <= z_max; ++z) {
      out[z - 1] = (z == 1) ? s2_pre * pw : 0.0;
      pw *= h_pre;
    }
    return;
  }
  const double base = s2_pre * suf.surv2;
  const double ratio = h_pre * suf.ext;
  double pw = 1.0;
  for (std::size_t z = 1; z <= z_max; ++z) {
    out[z - 1] = static_cast<double>(z) * base * pw;
    pw *= ratio;
  }
}

void fill_limit_masses(const QuenchedLaw& ql, std::size_t z_max, std::span<double> out) {
  // z survival^2 extinction^{z-1}; sums to 1 over all z by the geometric
  // identity, so 1 - partial sum is the exact tail
  const double s2 = std::exp(2.0 * ql.log_survival);
  const double ext = ql.extinction();
  double pw = 1.0;
  for (std::size_t z = 1; z <= z_max; ++z) {
    out[z - 1] = static_cast<double>(z) * s2 * pw;
    pw *= ext;
  }
}

ConditionalDistribution masses_from_summary(const ReplicateSummary& s, std::size_t offset,
                                            std::size_t z_max) {
  ConditionalDistribution d;
  for (std::size_t z = 1; z <= z_max; ++z) {
    d.support.push_back(static_cast<int>(z));
    d.masses.push_back(s.mean[offset + z - 1]);
    d.mass_se.push_back(s.se[offset + z - 1]);
  }
  return d;
}

}  // namespace

StrongConditionalPathReport check_strong_conditional_path(const EnvironmentModel& env, int n,
                                                          double t, int z_max,
                                                          const ExperimentBudget& budget,
                                                          double t_lo, double t_hi) {
  require_regime(env, Regime::strongly_supercritical, "check_strong_conditional_path");
  if (n < 2) throw std::invalid_argument("check_strong_conditional_path: n >= 2 required");
  for (double tt : {t, t_lo, t_hi})
    if (!(tt > 0.0 && tt < 1.0))
      throw std::invalid_argument("check_strong_conditional_path: t in (0,1) required");
  if (z_max < 1) throw std::invalid_argument("check_strong_conditional_path: z_max >= 1");
  const TiltedEnvironment tilted = tilt(env);
  const std::size_t Z = static_cast<std::size_t>(z_max);
  const std::size_t N = static_cast<std::size_t>(n);
  const auto split_at = [N](double tt) {
    auto m = static_cast<std::size_t>(std::floor(N * tt));
    return std::clamp<std::size_t>(m, 1, N - 1);
  };
  const std::size_t m_main = split_at(t), m_lo = split_at(t_lo), m_hi = split_at(t_hi);
  const std::size_t n_half = N / 2;

  // layout: [0,Z) numerators at t; [Z] denominator survival_n^2;
  // [Z+1, 2Z+1) numerator*denominator products; [2Z+1, 3Z+1) numerator
  // difference between t_lo and t_hi; [3Z+1, 4Z+1) limit masses at horizon n;
  // [4Z+1, 5Z+1) limit masses at horizon n/2
  const std::size_t dim = 5 * Z + 1;
  const auto summary = run_replicates(
      budget.replicates, budget.seed, budget.workers, dim,
      [&](std::uint64_t, RngStream& rng, std::span<double> out) {
        thread_local PathWorkspace ws;
        thread_local std::vector<double> buf_lo, buf_hi;
        buf_lo.resize(Z);
        buf_hi.resize(Z);
        ws.build(tilted, N, rng);

        fill_split_numerators(ws.prefix_law(m_main), suffix_factor(ws.path, m_main, N), Z,
                              out.subspan(0, Z));
        const QuenchedLaw full = ws.prefix_law(N);
        const double denom = std::exp(2.0 * full.log_survival);
        out[Z] = denom;
        for (std::size_t z = 0; z < Z; ++z) out[Z + 1 + z] = out[z] * denom;

        fill_split_numerators(ws.prefix_law(m_lo), suffix_factor(ws.path, m_lo, N), Z,
                              std::span<double>(buf_lo));
        fill_split_numerators(ws.prefix_law(m_hi), suffix_factor(ws.path, m_hi, N), Z,
                              std::span<double>(buf_hi));
        for (std::size_t z = 0; z < Z; ++z) out[2 * Z + 1 + z] = buf_lo[z] - buf_hi[z];

        fill_limit_masses(full, Z, out.subspan(3 * Z + 1, Z));
        fill_limit_masses(ws.prefix_law(n_half), Z, out.subspan(4 * Z + 1, Z));
        return 0.0;
      });

  StrongConditionalPathReport rep;
  rep.n = n;
  rep.t = t;
  rep.z_max = z_max;
  rep.t_lo = t_lo;
  rep.t_hi = t_hi;
  const double denom = summary.mean[Z];

  for (std::size_t z = 0; z < Z; ++z) {
    rep.lhs.support.push_back(static_cast<int>(z) + 1);
    rep.lhs.masses.push_back(summary.mean[z] / denom);
    rep.lhs.mass_se.push_back(ratio_se(summary.mean[z], summary.se[z], denom, summary.se[Z],
                                       summary.mean[Z + 1 + z], budget.replicates));
  }
  rep.rhs = masses_from_summary(summary, 3 * Z + 1, Z);
  rep.rhs_half = masses_from_summary(summary, 4 * Z + 1, Z);
  rep.rhs_tail_mass = 1.0 - rep.rhs.total_mass();

  const TvComparison main_cmp = tv_distance(rep.lhs, rep.rhs);
  rep.tv = main_cmp.tv;
  rep.tv_combined_se = main_cmp.combined_se;
  rep.rhs_half_gap_tv = tv_distance(rep.rhs, rep.rhs_half).tv;

  // t-independence from per-path differences: the shared denominator noise
  // is second order for a difference centered near zero
  double tv_t = 0.0, var_t = 0.0;
  for (std::size_t z = 0; z < Z; ++z) {
    const double dz = summary.mean[2 * Z + 1 + z] / denom;
    const double se = summary.se[2 * Z + 1 + z] / denom;
    tv_t += std::abs(dz);
    var_t += se * se;
  }
  rep.t_independence_tv = 0.5 * tv_t;
  rep.t_independence_se = 0.5 * std::sqrt(var_t);
  rep.replicates = budget.replicates;
  rep.seed = budget.seed;
  return rep;
}

IntermediateRateReport check_intermediate_rate(const EnvironmentModel& env,
                                               const std::vector<int>& n_grid,
                                               const ExperimentBudget& budget) {
  require_regime(env, Regime::intermediately_supercritical, "check_intermediate_rate");
  const std::vector<int> grid = checked_grid(n_grid, "check_intermediate_rate");
  const TiltedEnvironment tilted = tilt(env);
  const std::size_t G = grid.size();
  const std::size_t h = half_index(grid);
  const std::size_t M = G - 1;
  const double sq_max = std::sqrt(static_cast<double>(grid[M]));
  const double sq_half = std::sqrt(static_cast<double>(grid[h]));

  // layout: [0,G) a_i = survival^2; [G,2G) b_i = 1{L_n >= 0}; [2G,3G) a_i b_i;
  // [3G..3G+3] cross products a_h a_M, a_h b_M, b_h a_M, b_h b_M;
  // [3G+4] sqrt(n_max) b_M - sqrt(n_half) b_h
  const std::size_t dim = 3 * G + 5;
  const auto summary = run_replicates(
      budget.replicates, budget.seed, budget.workers, dim,
      [&](std::uint64_t, RngStream& rng, std::span<double> out) {
        QuenchedAccumulator acc;
        double l = 0.0;
        std::size_t gi = 0;
        for (int k = 1; k <= grid.back(); ++k) {
          acc.push(tilted.sample(rng));
          if (acc.s() < l) l = acc.s();
          if (k == grid[gi]) {
            out[gi] = std::exp(2.0 * acc.log_survival());
            out[G + gi] = (l >= 0.0) ? 1.0 : 0.0;
            ++gi;
          }
        }
        for (std::size_t i = 0; i < G; ++i) out[2 * G + i] = out[i] * out[G + i];
        out[3 * G + 0] = out[h] * out[M];
        out[3 * G + 1] = out[h] * out[G + M];
        out[3 * G + 2] = out[G + h] * out[M];
        out[3 * G + 3] = out[G + h] * out[G + M];
        out[3 * G + 4] = sq_max * out[G + M] - sq_half * out[G + h];
        return 0.0;
      });

  IntermediateRateReport rep;
  rep.n_grid = grid;
  rep.all_positive = true;
  for (std::size_t i = 0; i < G; ++i) {
    const double a = summary.mean[i], b = summary.mean[G + i];
    if (b <= 0.0)
      throw std::runtime_error("check_intermediate_rate: {L_n >= 0} never hit at n = " +
                               std::to_string(grid[i]));
    rep.theta_hat.push_back(a / b);
    rep.theta_se.push_back(ratio_se(a, summary.se[i], b, summary.se[G + i],
                                    summary.mean[2 * G + i], budget.replicates));
    rep.p_min_nonneg.push_back(b);
    rep.p_min_se.push_back(summary.se[G + i]);
    rep.sqrtn_p_min.push_back(std::sqrt(static_cast<double>(grid[i])) * b);
    if (!(a / b > 0.0)) rep.all_positive = false;
  }

  // delta method for theta(n_max) - theta(n_half) over the four correlated
  // means (a_M, b_M, a_h, b_h)
  {
    const double aM = summary.mean[M], bM = summary.mean[G + M];
    const double ah = summary.mean[h], bh = summary.mean[G + h];
    const double R = static_cast<double>(budget.replicates);
    auto var = [&](std::size_t i) { return summary.se[i] * summary.se[i] * R; };
    auto cov = [&](double mean_prod, double ma, double mb) { return mean_prod - ma * mb; };
    const double c_aM_bM = cov(summary.mean[2 * G + M], aM, bM);
    const double c_ah_bh = cov(summary.mean[2 * G + h], ah, bh);
    const double c_ah_aM = cov(summary.mean[3 * G + 0], ah, aM);
    const double c_ah_bM = cov(summary.mean[3 * G + 1], ah, bM);
    const double c_bh_aM = cov(summary.mean[3 * G + 2], bh, aM);
    const double c_bh_bM = cov(summary.mean[3 * G + 3], bh, bM);
    // gradient of aM/bM - ah/bh in (aM, bM, ah, bh)
    const double gaM = 1.0 / bM, gbM = -aM / (bM * bM);
    const double gah = -1.0 / bh, gbh = ah / (bh * bh);
    double v = gaM * gaM * var(M) + gbM * gbM * var(G + M) + gah * gah * var(h) +
               gbh * gbh * var(G + h);
    v += 2.0 * (gaM * gbM * c_aM_bM + gah * gbh * c_ah_bh + gaM * gah * c_ah_aM +
                gaM * gbh * c_bh_aM + gbM * gah * c_ah_bM + gbM * gbh * c_bh_bM);
    rep.stabilization_gap = aM / bM - ah / bh;
    rep.stabilization_se = std::sqrt(std::max(0.0, v / R));
  }
  rep.sqrtn_gap = summary.mean[3 * G + 4];
  rep.sqrtn_gap_se = summary.se[3 * G + 4];
  rep.replicates = budget.replicates;
  rep.seed = budget.seed;
  return rep;
}

MeanderReport check_meander(const EnvironmentModel& env, int n, const ExperimentBudget& budget,
                            long long surrogate_replicates) {
  const RegimeReport regime =
      require_regime(env, Regime::intermediately_supercritical, "check_meander");
  if (n < 2) throw std::invalid_argument("check_meander: n >= 2 required");
  const TiltedEnvironment tilted = tilt(env);
  const double sigma = std::sqrt(regime.variance_tilted);
  const double scale = 1.0 / (sigma * std::sqrt(static_cast<double>(n)));
  const std::size_t N = static_cast<std::size_t>(n);
  const std::size_t half = N / 2;

  std::vector<double> xs(budget.replicates), ws(budget.replicates), xh(budget.replicates);
  run_replicates_collect(budget.replicates, budget.seed, budget.workers,
                         [&](std::uint64_t r, RngStream& rng) {
                           QuenchedAccumulator acc;
                           double s_half = 0.0;
                           for (std::size_t k = 1; k <= N; ++k) {
                             acc.push(tilted.sample(rng));
                             if (k == half) s_half = acc.s();
                           }
                           xs[r] = acc.s() * scale;
                           xh[r] = s_half * scale;
                           ws[r] = std::exp(2.0 * acc.log_survival());
                         });

  MeanderReport rep;
  rep.n = n;
  rep.sigma_tilted = sigma;
  rep.replicates = budget.replicates;
  rep.seed = budget.seed;

  double wtot = 0.0, w2tot = 0.0, wneg = 0.0;
  for (long long i = 0; i < budget.replicates; ++i) {
    wtot += ws[i];
    w2tot += ws[i] * ws[i];
    if (xs[i] < 0.0) wneg += ws[i];
  }
  rep.negative_endpoint_mass = wneg / wtot;
  rep.ess = wtot * wtot / w2tot;

  {
    std::vector<std::pair<double, double>> xw(budget.replicates);
    for (long long i = 0; i < budget.replicates; ++i) xw[i] = {xs[i], ws[i]};
    const auto rayleigh = [](double x) { return (x <= 0.0) ? 0.0 : 1.0 - std::exp(-0.5 * x * x); };
    rep.ks_rayleigh = weighted_ks(xw, rayleigh);
  }

  // surrogate: the same t = 1/2 marginal from walk paths conditioned on
  // {L_n >= 0}; equivalent in the limit, reported as a diagnostic
  {
    std::vector<double> ys(surrogate_replicates);
    const std::uint64_t sseed = phase_seed(budget.seed, kSeedSurrogate);
    run_replicates_collect(surrogate_replicates, sseed, budget.workers,
                           [&](std::uint64_t r, RngStream& rng) {
                             const auto res = sample_conditioned_nonneg(tilted, N, 0, rng);
                             ys[r] = res.path.s[half] * scale;
                           });
    std::vector<std::pair<double, double>> xw(budget.replicates);
    for (long long i = 0; i < budget.replicates; ++i) xw[i] = {xh[i], ws[i]};
    rep.surrogate_ks_half_time = two_sample_ks(xw, ys);
    rep.surrogate_replicates = surrogate_replicates;
  }
  return rep;
}

MinimumConditionalReport check_minimum_conditional(const EnvironmentModel& env, int n, double t,
                                                   int z_max, int horizon_m, int horizon_b,
                                                   const ExperimentBudget& budget,
                                                   long long rhs_replicates) {
  require_regime(env, Regime::intermediately_supercritical, "check_minimum_conditional");
  if (n < 2) throw std::invalid_argument("check_minimum_conditional: n >= 2 required");
  if (!(t > 0.0 && t < 1.0))
    throw std::invalid_argument("check_minimum_conditional: t in (0,1) required");
  if (horizon_m < 2 || horizon_b < 0 || z_max < 1 || rhs_replicates < 2)
    throw std::invalid_argument("check_minimum_conditional: bad horizons / z_max / replicates");
  const TiltedEnvironment tilted = tilt(env);
  const std::size_t Z = static_cast<std::size_t>(z_max);
  const std::size_t N = static_cast<std::size_t>(n);
  const std::size_t m0 = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(N * t)), 1, N - 1);

  MinimumConditionalReport rep;
  rep.n = n;
  rep.t = t;
  rep.z_max = z_max;
  rep.horizon_m = horizon_m;
  rep.horizon_b = horizon_b;
  rep.replicates = budget.replicates;
  rep.rhs_replicates = rhs_replicates;
  rep.seed = budget.seed;

  // LHS: law of Z at the first minimum position on [floor(nt), n], given Z_n = 1.
  // layout: [0,Z) numerators; [Z] denominator; [Z+1,2Z+1) products; [2Z+1] small-z mass
  {
    const std::size_t dim = 2 * Z + 2;
    const auto summary = run_replicates(
        budget.replicates, phase_seed(budget.seed, kSeedLhs), budget.workers, dim,
        [&](std::uint64_t, RngStream& rng, std::span<double> out) {
          thread_local PathWorkspace ws;
          ws.build(tilted, N, rng);
          const std::size_t j =
              first_min_index(std::span<const double>(ws.path.s.data(), ws.path.s.size()), m0, N);
          fill_split_numerators(ws.prefix_law(j), suffix_factor(ws.path, j, N), Z,
                                out.subspan(0, Z));
          const double denom = std::exp(2.0 * ws.prefix_law(N).log_survival);
          out[Z] = denom;
          for (std::size_t z = 0; z < Z; ++z) out[Z + 1 + z] = out[z] * denom;
          double small = 0.0;
          for (std::size_t z = 0; z < std::min<std::size_t>(Z, 10); ++z) small += out[z];
          out[2 * Z + 1] = small;
          return 0.0;
        });
    const double denom = summary.mean[Z];
    for (std::size_t z = 0; z < Z; ++z) {
      rep.lhs.support.push_back(static_cast<int>(z) + 1);
      rep.lhs.masses.push_back(summary.mean[z] / denom);
      rep.lhs.mass_se.push_back(ratio_se(summary.mean[z], summary.se[z], denom, summary.se[Z],
                                         summary.mean[Z + 1 + z], budget.replicates));
    }
    rep.lhs_small_z_mass = summary.mean[2 * Z + 1] / denom;
  }

  // RHS: q(z) = z E+[survival^2 extinction^{z-1}] with E+ realized by
  // rejection on {L_{M+B} >= 0}; the prefix at M/2 gives the two-level
  // horizon stability for free.
  {
    const std::size_t M = static_cast<std::size_t>(horizon_m);
    const std::size_t Mh = M / 2;
    const std::size_t dim = 2 * Z + 1;
    const auto summary = run_replicates(
        rhs_replicates, phase_seed(budget.seed, kSeedRhs), budget.workers, dim,
        [&](std::uint64_t, RngStream& rng, std::span<double> out) {
          const auto res = sample_conditioned_nonneg(
              tilted, M, static_cast<std::size_t>(horizon_b), rng);
          QuenchedAccumulator acc;
          std::size_t k = 0;
          for (; k < Mh; ++k) acc.push(res.path.laws[k]);
          fill_limit_masses(acc.law(), Z, out.subspan(Z, Z));
          for (; k < M; ++k) acc.push(res.path.laws[k]);
          fill_limit_masses(acc.law(), Z, out.subspan(0, Z));
          out[2 * Z] = static_cast<double>(res.attempts);
          return 0.0;
        });
    rep.rhs = masses_from_summary(summary, 0, Z);
    rep.rhs_half = masses_from_summary(summary, Z, Z);
    rep.rhs_tail_mass = 1.0 - rep.rhs.total_mass();
    rep.rhs_half_gap_tv = tv_distance(rep.rhs, rep.rhs_half).tv;
    rep.acceptance_rate = 1.0 / summary.mean[2 * Z];
  }

  const TvComparison cmp = tv_distance(rep.lhs, rep.rhs);
  rep.tv = cmp.tv;
  rep.tv_combined_se = cmp.combined_se;
  return rep;
}

namespace {

// Composition of linear fractional generating functions as a Mobius map
// (a s + b)/(c s + d), extended one generation at a time on the right.
struct Mobius {
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

  void compose_right(const LinearFractionalLaw& q) {
    // f_q(s) = (A s + B)/(C s + D)
    const double A = (1.0 - q.a()) * (1.0 - q.p()) - q.a() * q.p();
    const double B = q.a();
    const double C = -q.p();
    const double D = 1.0;
    const double na = a * A + b * C, nb = a * B + b * D;
    const double nc = c * A + d * C, nd = c * B + d * D;
    double norm = std::max(std::max(std::abs(na), std::abs(nb)),
                           std::max(std::abs(nc), std::abs(nd)));
    if (norm == 0.0) norm = 1.0;
    a = na / norm;
    b = nb / norm;
    c = nc / norm;
    d = nd / norm;
  }

  double eval(double s) const { return (a * s + b) / (c * s + d); }
};

}  // namespace

ThetaSeriesReport estimate_theta_series(const EnvironmentModel& env, int k_max,
                                        int inner_horizon_m, int horizon_b,
                                        const ExperimentBudget& budget, long long inner_pool) {
  require_regime(env, Regime::intermediately_supercritical, "estimate_theta_series");
  if (k_max < 0 || inner_horizon_m < 1 || horizon_b < 0 || inner_pool < 2)
    throw std::invalid_argument("estimate_theta_series: bad parameters");
  const TiltedEnvironment tilted = tilt(env);
  const std::size_t K = static_cast<std::size_t>(k_max);

  // inner pool: extinction probabilities P_infty under the conditioned
  // environment, approximated at horizon M with rejection extension B
  std::vector<double> pool(inner_pool);
  run_replicates_collect(inner_pool, phase_seed(budget.seed, kSeedPool), budget.workers,
                         [&](std::uint64_t r, RngStream& rng) {
                           const auto res = sample_conditioned_nonneg(
                               tilted, static_cast<std::size_t>(inner_horizon_m),
                               static_cast<std::size_t>(horizon_b), rng);
                           pool[r] = quenched_law(res.path).extinction();
                         });
  const long long j_half = inner_pool / 2;

  // layout: [0..K] term contributions; [K+1] their sum; [K+2] pool-split diff
  const std::size_t dim = K + 3;
  const auto summary = run_replicates(
      budget.replicates, phase_seed(budget.seed, kSeedLhs), budget.workers, dim,
      [&](std::uint64_t, RngStream& rng, std::span<double> out) {
        Mobius gen;  // f_{0,k}
        double s = 0.0, strict_min = 0.0;
        double total = 0.0, split = 0.0;
        for (std::size_t k = 0; k <= K; ++k) {
          bool tau_here;
          if (k == 0) {
            tau_here = true;  // tau_0 = 0 always
          } else {
            const LinearFractionalLaw q = tilted.sample(rng);
            gen.compose_right(q);
            s += q.log_mean();
            tau_here = (s < strict_min);
            if (s < strict_min) strict_min = s;
          }
          double c_k = 0.0, first = 0.0, second = 0.0;
          if (tau_here) {
            for (long long j = 0; j < inner_pool; ++j) {
              const double v = 1.0 - gen.eval(pool[j]);
              const double v2 = v * v;
              c_k += v2;
              if (j < j_half) first += v2;
              else second += v2;
            }
            c_k /= static_cast<double>(inner_pool);
            first /= static_cast<double>(j_half);
            second /= static_cast<double>(inner_pool - j_half);
          }
          out[k] = c_k;
          total += c_k;
          split += (tau_here ? first - second : 0.0);
        }
        out[K + 1] = total;
        out[K + 2] = split;
        return 0.0;
      });

  ThetaSeriesReport rep;
  rep.k_max = k_max;
  rep.inner_horizon = inner_horizon_m;
  rep.horizon_b = horizon_b;
  rep.inner_pool = inner_pool;
  rep.terms.assign(summary.mean.begin(), summary.mean.begin() + K + 1);
  rep.term_se.assign(summary.se.begin(), summary.se.begin() + K + 1);
  rep.theta_series = summary.mean[K + 1];
  rep.theta_series_se = summary.se[K + 1];
  double tail = 0.0;
  for (std::size_t k = (3 * (K + 1)) / 4; k <= K; ++k) tail += rep.terms[k];
  rep.tail_last_quarter = tail;
  rep.pool_split_gap = summary.mean[K + 2];
  rep.theta_ratio = std::numeric_limits<double>::quiet_NaN();
  rep.theta_ratio_se = std::numeric_limits<double>::quiet_NaN();
  rep.replicates = budget.replicates;
  rep.seed = budget.seed;
  return rep;
}

EarlyMinimumReport check_early_minimum(const EnvironmentModel& env, int n,
                                       const std::vector<int>& z_values,
                                       const std::vector<int>& m_grid,
                                       const ExperimentBudget& budget) {
  require_regime(env, Regime::intermediately_supercritical, "check_early_minimum");
  if (n < 1 || z_values.empty() || m_grid.empty())
    throw std::invalid_argument("check_early_minimum: bad parameters");
  for (int z : z_values)
    if (z < 1) throw std::invalid_argument("check_early_minimum: z >= 1 required");
  for (int m : m_grid)
    if (m < 0 || m > n) throw std::invalid_argument("check_early_minimum: m in [0, n] required");
  const TiltedEnvironment tilted = tilt(env);
  const std::size_t ZN = z_values.size(), MN = m_grid.size();
  const std::size_t N = static_cast<std::size_t>(n);

  // layout: [zi*MN + mi] A = survival^2 H^{z-1} 1{tau_n > m}; then [ZN*MN] b =
  // 1{L_n >= 0}; then products A*b
  const std::size_t dim = 2 * ZN * MN + 1;
  const std::size_t b_at = ZN * MN;
  const auto summary = run_replicates(
      budget.replicates, budget.seed, budget.workers, dim,
      [&](std::uint64_t, RngStream& rng, std::span<double> out) {
        QuenchedAccumulator acc;
        double l = 0.0;
        double floor_val = 0.0;
        std::size_t tau = 0;
        for (std::size_t k = 1; k <= N; ++k) {
          acc.push(tilted.sample(rng));
          if (acc.s() < l) l = acc.s();
          if (acc.s() < floor_val) {
            floor_val = acc.s();
            tau = k;
          }
        }
        const QuenchedLaw ql = acc.law();
        const double s2 = std::exp(2.0 * ql.log_survival);
        const double hh = ql.h();
        const double b = (l >= 0.0) ? 1.0 : 0.0;
        out[b_at] = b;
        for (std::size_t zi = 0; zi < ZN; ++zi) {
          const double g = s2 * std::pow(hh, static_cast<double>(z_values[zi] - 1));
          for (std::size_t mi = 0; mi < MN; ++mi) {
            const double v = (tau > static_cast<std::size_t>(m_grid[mi])) ? g : 0.0;
            out[zi * MN + mi] = v;
            out[b_at + 1 + zi * MN + mi] = v * b;
          }
        }
        return 0.0;
      });

  EarlyMinimumReport rep;
  rep.n = n;
  rep.z_values = z_values;
  rep.m_grid = m_grid;
  rep.p_min_nonneg = summary.mean[b_at];
  if (rep.p_min_nonneg <= 0.0)
    throw std::runtime_error("check_early_minimum: {L_n >= 0} never hit");
  rep.monotone_nonincreasing = true;
  rep.ratio.resize(ZN);
  rep.ratio_se.resize(ZN);
  for (std::size_t zi = 0; zi < ZN; ++zi) {
    for (std::size_t mi = 0; mi < MN; ++mi) {
      const std::size_t i = zi * MN + mi;
      const double a = summary.mean[i];
      rep.ratio[zi].push_back(a / rep.p_min_nonneg);
      rep.ratio_se[zi].push_back(ratio_se(a, summary.se[i], rep.p_min_nonneg, summary.se[b_at],
                                          summary.mean[b_at + 1 + i], budget.replicates));
      if (mi > 0 && rep.ratio[zi][mi] > rep.ratio[zi][mi - 1] + 1e-12)
        rep.monotone_nonincreasing = false;
    }
  }
  rep.replicates = budget.replicates;
  rep.seed = budget.seed;
  return rep;
}

double sparre_andersen_exact(long long n) {
  const double dn = static_cast<double>(n);
  return std::exp(std::lgamma(2.0 * dn + 1.0) - 2.0 * std::lgamma(dn + 1.0) -
                  dn * std::log(4.0));
}

WalkFluctuationReport run_walk_fluctuation(const EnvironmentModel& env,
                                           const std::vector<int>& n_grid,
                                           const std::vector<double>& x_grid, long long renewal_k,
                                           const ExperimentBudget& budget) {
  const TiltedEnvironment tilted = tilt(env);
  const IncrementSampler inc = increment_sampler(tilted);
  WalkFluctuationReport rep;
  rep.n_grid = checked_grid(n_grid, "run_walk_fluctuation");
  rep.replicates = budget.replicates;
  rep.seed = budget.seed;

  std::uint64_t row = 1;
  for (int n : rep.n_grid) {
    const Estimate e = prob_min_nonneg(inc, static_cast<std::size_t>(n), budget.replicates,
                                       phase_seed(budget.seed, row++), budget.workers);
    rep.p_min_nonneg.push_back(e.value);
    rep.p_min_se.push_back(e.stderror);
    rep.sqrtn_p_min.push_back(std::sqrt(static_cast<double>(n)) * e.value);
  }

  rep.x_grid = x_grid;
  for (double x : x_grid) {
    rep.renewal.push_back(
        renewal_u(inc, x, renewal_k, budget.replicates, phase_seed(budget.seed, row++),
                  budget.workers));
    rep.renewal_double.push_back(
        renewal_u(inc, x, 2 * renewal_k, budget.replicates, phase_seed(budget.seed, row++),
                  budget.workers));
  }
  rep.u_at_zero =
      renewal_u(inc, 0.0, renewal_k, budget.replicates, phase_seed(budget.seed, row++),
                budget.workers)
          .u_hat;

  const IncrementSampler normal_inc = [](RngStream& rng) { return rng.normal(); };
  for (int n : {1, 2, 5, 10, 100}) {
    const Estimate e = prob_min_nonneg(normal_inc, static_cast<std::size_t>(n), budget.replicates,
                                       phase_seed(budget.seed, row++), budget.workers);
    rep.sa_n.push_back(n);
    rep.sa_estimate.push_back(e.value);
    rep.sa_se.push_back(e.stderror);
    rep.sa_exact.push_back(sparre_andersen_exact(n));
  }
  return rep;
}

}  // namespace bpre
