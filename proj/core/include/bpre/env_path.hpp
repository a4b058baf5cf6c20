#ifndef BPRE_ENV_PATH_HPP
#define BPRE_ENV_PATH_HPP

#include <cstddef>
#include <vector>

#include "bpre/offspring.hpp"

namespace bpre {

// A realized environment prefix (Q_1, ..., Q_n) together with the cached
// associated-walk values S_k = sum_{j<=k} log m(Q_j) and the standardized
// second factorial moments eta_k. s has length n+1 with s[0] = 0.
struct EnvPath {
  std::vector<LinearFractionalLaw> laws;
  std::vector<double> s;    // S_0..S_n
  std::vector<double> eta;  // eta_1..eta_n

  // log of the importance weight attached to this path by the sampler that
  // produced it. 0 for exactly-distributed draws; self-normalized importance
  // sampling stores -S_n here.
  double log_sampling_weight = 0.0;

  EnvPath() : s(1, 0.0) {}

  std::size_t size() const { return laws.size(); }

  void reserve(std::size_t n) {
    laws.reserve(n);
    s.reserve(n + 1);
    eta.reserve(n);
  }

  void clear() {
    laws.clear();
    s.assign(1, 0.0);
    eta.clear();
    log_sampling_weight = 0.0;
  }

  void push_back(const LinearFractionalLaw& q) {
    laws.push_back(q);
    s.push_back(s.back() + q.log_mean());
    eta.push_back(q.eta());
  }

  // Environment shifted by k generations: (Q_{k+1}, ..., Q_n), walk re-based
  // to start at 0.
  EnvPath shifted(std::size_t k) const;
};

}  // namespace bpre

#endif
