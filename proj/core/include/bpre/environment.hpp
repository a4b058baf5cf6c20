#ifndef BPRE_ENVIRONMENT_HPP
#define BPRE_ENVIRONMENT_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bpre/env_path.hpp"
#include "bpre/estimate.hpp"
#include "bpre/offspring.hpp"
#include "bpre/rng.hpp"

// Law of the random environment Q and the exponential change of measure
//
//   E_tilted[phi(Q)] = gamma^{-1} E[e^{-X} phi(Q)],   gamma = E[e^{-X}],
//
// exact for finite mixtures (reweighted atoms), self-normalized importance
// weighting for external samplers.

namespace bpre {

struct MixtureAtom {
  LinearFractionalLaw law;
  double weight;
};

enum class Regime { strongly_supercritical, intermediately_supercritical, other };

std::string to_string(Regime r);

struct RegimeReport {
  double gamma = 0.0;
  double drift_original = 0.0;     // E[X]
  double mean_x_exp_neg_x = 0.0;   // E[X e^{-X}], the classifying quantity
  double drift_tilted = 0.0;       // E_tilted[X]
  double variance_tilted = 0.0;    // Var_tilted[X]
  double assumption2_moment = 0.0; // E_tilted[|log(1 - Q(0))|^{alpha+eps}]
  Regime regime = Regime::other;
  double classification_tolerance = 0.0;
};

class EnvironmentModel {
 public:
  using Sampler = std::function<LinearFractionalLaw(RngStream&)>;

  // Weights must be positive; they are normalized to sum to one.
  static EnvironmentModel mixture(std::vector<MixtureAtom> atoms);
  static EnvironmentModel external_sampler(Sampler sampler, bool supports_importance_weights);

  bool is_mixture() const { return !atoms_.empty(); }
  bool supports_importance_weights() const { return is_mixture() || snis_ok_; }
  const std::vector<MixtureAtom>& atoms() const { return atoms_; }

  LinearFractionalLaw sample(RngStream& rng) const;

  // gamma = E[e^{-X}] = E[1/m(Q)], exact for mixtures; throws for external
  // samplers (use gamma_mc).
  double gamma() const;
  Estimate gamma_mc(long long replicates, std::uint64_t seed) const;

  // Exact expectation of an atom functional over a finite mixture.
  double expect(const std::function<double(const LinearFractionalLaw&)>& phi) const;

 private:
  EnvironmentModel() = default;
  std::vector<MixtureAtom> atoms_;
  std::vector<double> cum_weights_;
  Sampler sampler_;
  bool snis_ok_ = false;
};

class TiltedEnvironment {
 public:
  enum class Mode { exact, self_normalized };

  const EnvironmentModel& base() const { return base_; }
  double gamma() const { return gamma_; }
  Mode mode() const { return mode_; }

  // Exact mode: the reweighted mixture itself.
  const EnvironmentModel& tilted_model() const;

  LinearFractionalLaw sample(RngStream& rng) const;

  // i.i.d. environment of length n. Exact mode: distributed under the tilted
  // measure with unit weight. Self-normalized mode: drawn from the base law
  // with log weight -S_n recorded on the path.
  EnvPath sample_path(std::size_t n, RngStream& rng) const;
  void sample_path_into(EnvPath& path, std::size_t n, RngStream& rng) const;

  friend TiltedEnvironment tilt(const EnvironmentModel& env);
  friend TiltedEnvironment tilt_mc(const EnvironmentModel& env, long long replicates,
                                   std::uint64_t seed);

 private:
  EnvironmentModel base_;
  EnvironmentModel tilted_;  // populated in exact mode
  double gamma_ = 0.0;
  Mode mode_ = Mode::exact;
};

// Exponential change of measure. Exact for mixtures; throws for an external
// sampler (see tilt_mc) or when the sampler lacks weight support.
TiltedEnvironment tilt(const EnvironmentModel& env);
// Sampler variant: estimates gamma by Monte Carlo and returns a
// self-normalized importance-sampling tilt.
TiltedEnvironment tilt_mc(const EnvironmentModel& env, long long replicates, std::uint64_t seed);

// Classifies the regime from E[X e^{-X}]: positive -> strongly supercritical,
// zero (within tolerance) -> intermediately supercritical, otherwise other.
// Exact on mixtures with tolerance 1e-10; Monte Carlo with a 3-standard-error
// band for external samplers.
RegimeReport regime_report(const EnvironmentModel& env, double alpha = 2.0, double epsilon = 1.0);
RegimeReport regime_report_mc(const EnvironmentModel& env, double alpha, double epsilon,
                              long long replicates, std::uint64_t seed);

// Free parameter for intermediate-regime calibration: either one mixing
// weight (the remaining weights keep their proportions) or one atom's a or p
// searched over (lo, hi).
struct CalibrationParameter {
  enum class Kind { mixing_weight, atom_a, atom_p } kind = Kind::mixing_weight;
  std::size_t atom_index = 0;
  double lo = 1e-9;  // search bracket; for mixing_weight this is the weight range
  double hi = 1.0 - 1e-9;
};

// Finds a parameter value with |E[X e^{-X}]| < 1e-12 by bisection. Throws
// std::runtime_error when the bracket has no sign change.
EnvironmentModel calibrate_intermediate(const std::vector<LinearFractionalLaw>& atoms,
                                        const CalibrationParameter& param);

EnvPath sample_env_path(const EnvironmentModel& env, std::size_t n, RngStream& rng);
EnvPath sample_env_path(const TiltedEnvironment& env, std::size_t n, RngStream& rng);

}  // namespace bpre

#endif
