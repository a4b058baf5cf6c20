#ifndef BPRE_RNG_HPP
#define BPRE_RNG_HPP

#include <cmath>
#include <cstdint>

// Deterministic RNG streams. Every Monte Carlo replicate owns a stream
// derived from (master seed, replicate index), so results are reproducible
// bit-for-bit regardless of how replicates are scheduled across workers.
//
// Generator: xoshiro256** (Blackman/Vigna, public domain), state seeded
// through SplitMix64. Hand-rolled so output does not depend on the standard
// library implementation.

namespace bpre {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : state_) w = splitmix64(sm);
  }

  // Stream for one replicate: mixes the index into the seed before expansion
  // so neighboring replicates get decorrelated states.
  RngStream(std::uint64_t master_seed, std::uint64_t stream_index)
      : RngStream(mix(master_seed, stream_index)) {}

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t sm = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    std::uint64_t out = splitmix64(sm);
    return splitmix64(sm) ^ out;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  std::uint64_t operator()() { return next_u64(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~0ULL; }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via the polar (Marsaglia) method; one spare cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  // Geometric on {0, 1, ...} with P(k) = (1-p) p^k, inverse transform.
  std::uint64_t geometric_failures(double p) {
    if (p <= 0.0) return 0;
    return static_cast<std::uint64_t>(std::floor(std::log(uniform_pos()) / std::log(p)));
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace bpre

#endif
