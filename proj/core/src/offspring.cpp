#include "bpre/offspring.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bpre {

LinearFractionalLaw::LinearFractionalLaw(double a, double p) : a_(a), p_(p) {
  if (!(a >= 0.0 && a < 1.0))
    throw std::invalid_argument("LinearFractionalLaw: a must be in [0,1), got " + std::to_string(a));
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("LinearFractionalLaw: p must be in (0,1), got " + std::to_string(p));
  mean_ = (1.0 - a_) / (1.0 - p_);
  log_mean_ = std::log1p(-a_) - std::log1p(-p_);
  eta_ = p_ / (1.0 - a_);
  log_eta_ = std::log(p_) - std::log1p(-a_);
  log_p_ = std::log(p_);
}

double LinearFractionalLaw::pmf(std::uint64_t k) const {
  if (k == 0) return a_;
  const double head = (1.0 - a_) * (1.0 - p_);
  if (k == 1) return head;
  return head * std::exp(static_cast<double>(k - 1) * log_p_);
}

double LinearFractionalLaw::gen_fn(double s) const {
  if (!(s >= 0.0 && s <= 1.0))
    throw std::invalid_argument("gen_fn: s must be in [0,1], got " + std::to_string(s));
  return a_ + (1.0 - a_) * (1.0 - p_) * s / (1.0 - p_ * s);
}

std::uint64_t LinearFractionalLaw::sample(RngStream& rng) const {
  if (rng.uniform() < a_) return 0;
  return 1 + rng.geometric_failures(p_);
}

std::uint64_t LinearFractionalLaw::series_horizon(double tail_eps) const {
  // p^K < eps  <=>  K > log(eps)/log(p)
  const double k = std::log(tail_eps) / log_p_;
  return static_cast<std::uint64_t>(std::ceil(k)) + 1;
}

}  // namespace bpre
