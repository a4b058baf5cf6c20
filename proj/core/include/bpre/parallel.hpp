#ifndef BPRE_PARALLEL_HPP
#define BPRE_PARALLEL_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bpre/rng.hpp"

// Replicate-parallel Monte Carlo with deterministic output.
//
// Replicates are grouped into fixed-size blocks. Workers pull whole blocks,
// accumulate partial sums sequentially inside each block, and the block
// partials are merged in block-index order after all workers finish. Block
// boundaries do not depend on the worker count, every replicate draws from
// its own (seed, index)-derived stream, so the result is bit-identical for
// any scheduling.

namespace bpre {

// Weighted running sums for a fixed-dimension value vector. Weights enter as
// log-weights; sums are kept relative to the largest log-weight seen so the
// accumulator survives weights spanning hundreds of e-folds.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::size_t dim = 0) { reset(dim); }

  void reset(std::size_t dim);
  void add(std::span<const double> v, double log_weight);
  void merge(const MomentAccumulator& other);

  long long count() const { return count_; }
  std::size_t dim() const { return wv_.size(); }
  double log_shift() const { return log_shift_; }
  double weight_sum() const { return wsum_; }

  double mean(std::size_t i) const { return wv_[i] / wsum_; }
  // Importance-sampling standard error sqrt(sum w^2 (v - mean)^2) / sum w;
  // reduces to the plain sqrt(var/n) for unit weights.
  double stderror(std::size_t i) const;
  double effective_sample_size() const;

 private:
  std::vector<double> wv_, wv2_, w2v_, w2v2_;
  double wsum_ = 0.0, w2sum_ = 0.0;
  double log_shift_ = 0.0;
  long long count_ = 0;
  void rescale(double new_shift);
};

struct ReplicateSummary {
  long long replicates = 0;
  std::vector<double> mean;
  std::vector<double> se;
  double effective_sample_size = 0.0;

  double operator[](std::size_t i) const { return mean[i]; }
};

// eval fills `out` (size dim) for one replicate and returns the log of the
// replicate's importance weight (0 for exact sampling).
using ReplicateEval = std::function<double(std::uint64_t index, RngStream& rng, std::span<double> out)>;

ReplicateSummary run_replicates(long long replicates, std::uint64_t seed, int workers,
                                std::size_t dim, const ReplicateEval& eval);

// Record-collecting variant: eval writes into caller-owned storage at its
// replicate index. Indices are disjoint, so scheduling cannot change the
// result.
void run_replicates_collect(long long replicates, std::uint64_t seed, int workers,
                            const std::function<void(std::uint64_t index, RngStream& rng)>& eval);

int resolve_workers(int requested);

}  // namespace bpre

#endif
