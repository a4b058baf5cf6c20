#include "bpre/environment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bpre {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::strongly_supercritical: return "strongly-supercritical";
    case Regime::intermediately_supercritical: return "intermediately-supercritical";
    default: return "other";
  }
}

EnvironmentModel EnvironmentModel::mixture(std::vector<MixtureAtom> atoms) {
  if (atoms.empty()) throw std::invalid_argument("mixture: at least one atom required");
  double total = 0.0;
  for (const auto& a : atoms) {
    if (!(a.weight > 0.0)) throw std::invalid_argument("mixture: weights must be positive");
    total += a.weight;
  }
  EnvironmentModel env;
  env.atoms_ = std::move(atoms);
  env.cum_weights_.reserve(env.atoms_.size());
  double acc = 0.0;
  for (auto& a : env.atoms_) {
    a.weight /= total;
    acc += a.weight;
    env.cum_weights_.push_back(acc);
  }
  env.cum_weights_.back() = 1.0;
  return env;
}

EnvironmentModel EnvironmentModel::external_sampler(Sampler sampler,
                                                    bool supports_importance_weights) {
  if (!sampler) throw std::invalid_argument("external_sampler: empty sampler");
  EnvironmentModel env;
  env.sampler_ = std::move(sampler);
  env.snis_ok_ = supports_importance_weights;
  return env;
}

LinearFractionalLaw EnvironmentModel::sample(RngStream& rng) const {
  if (!is_mixture()) return sampler_(rng);
  const double u = rng.uniform();
  // mixtures are small; a forward scan beats binary search in practice
  std::size_t i = 0;
  while (i + 1 < cum_weights_.size() && u >= cum_weights_[i]) ++i;
  return atoms_[i].law;
}

double EnvironmentModel::gamma() const {
  if (!is_mixture())
    throw std::runtime_error("gamma: exact value needs a finite mixture; use gamma_mc");
  double g = 0.0;
  for (const auto& a : atoms_) g += a.weight / a.law.mean();
  if (!std::isfinite(g) || g <= 0.0) throw std::runtime_error("gamma: non-finite or non-positive");
  return g;
}

Estimate EnvironmentModel::gamma_mc(long long replicates, std::uint64_t seed) const {
  if (replicates < 2) throw std::invalid_argument("gamma_mc: need at least 2 replicates");
  double sum = 0.0, sumsq = 0.0;
  for (long long i = 0; i < replicates; ++i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i));
    const double v = 1.0 / sample(rng).mean();
    sum += v;
    sumsq += v * v;
  }
  const double n = static_cast<double>(replicates);
  Estimate e;
  e.value = sum / n;
  e.stderror = std::sqrt(std::max(0.0, sumsq / n - e.value * e.value) / (n - 1.0));
  e.replicates = replicates;
  e.seed = seed;
  e.effective_sample_size = n;
  if (!std::isfinite(e.value)) throw std::runtime_error("gamma_mc: non-finite estimate");
  return e;
}

double EnvironmentModel::expect(
    const std::function<double(const LinearFractionalLaw&)>& phi) const {
  if (!is_mixture()) throw std::runtime_error("expect: exact expectation needs a finite mixture");
  double v = 0.0;
  for (const auto& a : atoms_) v += a.weight * phi(a.law);
  return v;
}

const EnvironmentModel& TiltedEnvironment::tilted_model() const {
  if (mode_ != Mode::exact)
    throw std::runtime_error("tilted_model: only available for exact (mixture) tilts");
  return tilted_;
}

LinearFractionalLaw TiltedEnvironment::sample(RngStream& rng) const {
  return (mode_ == Mode::exact) ? tilted_.sample(rng) : base_.sample(rng);
}

EnvPath TiltedEnvironment::sample_path(std::size_t n, RngStream& rng) const {
  EnvPath path;
  sample_path_into(path, n, rng);
  return path;
}

void TiltedEnvironment::sample_path_into(EnvPath& path, std::size_t n, RngStream& rng) const {
  path.clear();
  path.reserve(n);
  for (std::size_t i = 0; i < n; ++i) path.push_back(sample(rng));
  if (mode_ == Mode::self_normalized) path.log_sampling_weight = -path.s.back();
}

TiltedEnvironment tilt(const EnvironmentModel& env) {
  if (!env.is_mixture()) {
    if (!env.supports_importance_weights())
      throw std::runtime_error("tilt: external sampler without importance-weight support");
    throw std::runtime_error("tilt: external sampler needs a Monte Carlo gamma; use tilt_mc");
  }
  TiltedEnvironment t;
  t.base_ = env;
  t.gamma_ = env.gamma();
  std::vector<MixtureAtom> tilted;
  tilted.reserve(env.atoms().size());
  for (const auto& a : env.atoms())
    tilted.push_back({a.law, a.weight / (a.law.mean() * t.gamma_)});
  t.tilted_ = EnvironmentModel::mixture(std::move(tilted));
  t.mode_ = TiltedEnvironment::Mode::exact;
  return t;
}

TiltedEnvironment tilt_mc(const EnvironmentModel& env, long long replicates, std::uint64_t seed) {
  if (env.is_mixture()) return tilt(env);
  if (!env.supports_importance_weights())
    throw std::runtime_error("tilt: external sampler without importance-weight support");
  TiltedEnvironment t;
  t.base_ = env;
  t.gamma_ = env.gamma_mc(replicates, seed).value;
  t.mode_ = TiltedEnvironment::Mode::self_normalized;
  return t;
}

namespace {

constexpr double kExactRegimeTol = 1e-10;

Regime classify(double mean_x_exp_neg_x, double tol) {
  if (std::abs(mean_x_exp_neg_x) <= tol) return Regime::intermediately_supercritical;
  if (mean_x_exp_neg_x > tol) return Regime::strongly_supercritical;
  return Regime::other;
}

double assumption2_term(const LinearFractionalLaw& q, double power) {
  return std::pow(std::abs(std::log1p(-q.a())), power);
}

}  // namespace

RegimeReport regime_report(const EnvironmentModel& env, double alpha, double epsilon) {
  if (!env.is_mixture())
    throw std::runtime_error("regime_report: exact report needs a finite mixture; use regime_report_mc");
  RegimeReport r;
  r.gamma = env.gamma();
  r.drift_original = env.expect([](const auto& q) { return q.log_mean(); });
  r.mean_x_exp_neg_x =
      env.expect([](const auto& q) { return q.log_mean() / q.mean(); });
  r.drift_tilted = r.mean_x_exp_neg_x / r.gamma;
  const double ex2 =
      env.expect([](const auto& q) { return q.log_mean() * q.log_mean() / q.mean(); }) / r.gamma;
  r.variance_tilted = std::max(0.0, ex2 - r.drift_tilted * r.drift_tilted);
  const double power = alpha + epsilon;
  r.assumption2_moment =
      env.expect([power](const auto& q) { return assumption2_term(q, power) / q.mean(); }) /
      r.gamma;
  r.classification_tolerance = kExactRegimeTol;
  r.regime = classify(r.mean_x_exp_neg_x, kExactRegimeTol);
  return r;
}

RegimeReport regime_report_mc(const EnvironmentModel& env, double alpha, double epsilon,
                              long long replicates, std::uint64_t seed) {
  if (replicates < 2) throw std::invalid_argument("regime_report_mc: need at least 2 replicates");
  const double power = alpha + epsilon;
  double s_g = 0, s_xe = 0, s_xe2 = 0, s_x = 0, s_x2e = 0, s_a2 = 0;
  for (long long i = 0; i < replicates; ++i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i));
    const LinearFractionalLaw q = env.sample(rng);
    const double w = 1.0 / q.mean();  // e^{-X}
    const double x = q.log_mean();
    s_g += w;
    s_x += x;
    s_xe += x * w;
    s_xe2 += x * w * x * w;
    s_x2e += x * x * w;
    s_a2 += assumption2_term(q, power) * w;
  }
  const double n = static_cast<double>(replicates);
  RegimeReport r;
  r.gamma = s_g / n;
  r.drift_original = s_x / n;
  r.mean_x_exp_neg_x = s_xe / n;
  r.drift_tilted = r.mean_x_exp_neg_x / r.gamma;
  const double ex2 = (s_x2e / n) / r.gamma;
  r.variance_tilted = std::max(0.0, ex2 - r.drift_tilted * r.drift_tilted);
  r.assumption2_moment = (s_a2 / n) / r.gamma;
  const double se_xe =
      std::sqrt(std::max(0.0, s_xe2 / n - r.mean_x_exp_neg_x * r.mean_x_exp_neg_x) / (n - 1.0));
  r.classification_tolerance = 3.0 * se_xe;
  r.regime = classify(r.mean_x_exp_neg_x, r.classification_tolerance);
  return r;
}

namespace {

EnvironmentModel build_calibrated(const std::vector<LinearFractionalLaw>& atoms,
                                  const CalibrationParameter& param, double t) {
  std::vector<MixtureAtom> mix;
  mix.reserve(atoms.size());
  switch (param.kind) {
    case CalibrationParameter::Kind::mixing_weight: {
      if (atoms.size() < 2)
        throw std::invalid_argument("calibrate: mixing-weight search needs >= 2 atoms");
      const double rest = (1.0 - t) / static_cast<double>(atoms.size() - 1);
      for (std::size_t i = 0; i < atoms.size(); ++i)
        mix.push_back({atoms[i], (i == param.atom_index) ? t : rest});
      break;
    }
    case CalibrationParameter::Kind::atom_a:
    case CalibrationParameter::Kind::atom_p: {
      const double w = 1.0 / static_cast<double>(atoms.size());
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (i == param.atom_index) {
          const auto& q = atoms[i];
          mix.push_back({param.kind == CalibrationParameter::Kind::atom_a
                             ? LinearFractionalLaw(t, q.p())
                             : LinearFractionalLaw(q.a(), t),
                         w});
        } else {
          mix.push_back({atoms[i], w});
        }
      }
      break;
    }
  }
  return EnvironmentModel::mixture(std::move(mix));
}

}  // namespace

EnvironmentModel calibrate_intermediate(const std::vector<LinearFractionalLaw>& atoms,
                                        const CalibrationParameter& param) {
  if (param.atom_index >= atoms.size())
    throw std::invalid_argument("calibrate: atom index out of range");
  if (!(param.lo < param.hi)) throw std::invalid_argument("calibrate: empty bracket");

  const auto objective = [&](double t) {
    const EnvironmentModel env = build_calibrated(atoms, param, t);
    return env.expect([](const auto& q) { return q.log_mean() / q.mean(); });
  };

  double lo = param.lo, hi = param.hi;
  double f_lo = objective(lo), f_hi = objective(hi);
  if (f_lo == 0.0) return build_calibrated(atoms, param, lo);
  if (f_hi == 0.0) return build_calibrated(atoms, param, hi);
  if ((f_lo > 0.0) == (f_hi > 0.0))
    throw std::runtime_error("calibrate_intermediate: E[X e^{-X}] has constant sign over bracket");

  for (int iter = 0; iter < 200 && hi - lo > 1e-16 * std::max(1.0, std::abs(lo)); ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = objective(mid);
    if (f_mid == 0.0) {
      lo = hi = mid;
      break;
    }
    if ((f_mid > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  const double t = 0.5 * (lo + hi);
  const EnvironmentModel env = build_calibrated(atoms, param, t);
  const double residual = env.expect([](const auto& q) { return q.log_mean() / q.mean(); });
  if (std::abs(residual) >= 1e-12)
    throw std::runtime_error("calibrate_intermediate: residual " + std::to_string(residual) +
                             " exceeds 1e-12");
  return env;
}

EnvPath sample_env_path(const EnvironmentModel& env, std::size_t n, RngStream& rng) {
  EnvPath path;
  path.reserve(n);
  for (std::size_t i = 0; i < n; ++i) path.push_back(env.sample(rng));
  return path;
}

EnvPath sample_env_path(const TiltedEnvironment& env, std::size_t n, RngStream& rng) {
  return env.sample_path(n, rng);
}

}  // namespace bpre
