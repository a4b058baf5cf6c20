#ifndef BPRE_ESTIMATE_HPP
#define BPRE_ESTIMATE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bpre {

// Monte Carlo result. `stderror` comes from per-replicate values (or the
// delta method for ratio estimators); `effective_sample_size` equals the
// replicate count for unweighted estimators and (sum w)^2 / sum w^2 for
// importance-weighted ones.
struct Estimate {
  double value = 0.0;
  double stderror = 0.0;
  long long replicates = 0;
  std::uint64_t seed = 0;
  double effective_sample_size = 0.0;
  std::map<std::string, double> diagnostics;
};

// Estimated distribution on a finite support of positive integers, with a
// per-mass standard error.
struct ConditionalDistribution {
  std::vector<int> support;
  std::vector<double> masses;
  std::vector<double> mass_se;

  double total_mass() const {
    double t = 0.0;
    for (double m : masses) t += m;
    return t;
  }
};

// Total variation distance between two distributions given on the same
// support, plus a combined standard error from the per-mass errors.
struct TvComparison {
  double tv = 0.0;
  double combined_se = 0.0;
};

TvComparison tv_distance(const ConditionalDistribution& a, const ConditionalDistribution& b);

}  // namespace bpre

#endif
