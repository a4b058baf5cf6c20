#include "bpre/parallel.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace bpre {

void MomentAccumulator::reset(std::size_t dim) {
  wv_.assign(dim, 0.0);
  wv2_.assign(dim, 0.0);
  w2v_.assign(dim, 0.0);
  w2v2_.assign(dim, 0.0);
  wsum_ = w2sum_ = 0.0;
  log_shift_ = 0.0;
  count_ = 0;
}

void MomentAccumulator::rescale(double new_shift) {
  const double f = std::exp(log_shift_ - new_shift);
  const double f2 = f * f;
  for (std::size_t i = 0; i < wv_.size(); ++i) {
    wv_[i] *= f;
    wv2_[i] *= f;
    w2v_[i] *= f2;
    w2v2_[i] *= f2;
  }
  wsum_ *= f;
  w2sum_ *= f2;
  log_shift_ = new_shift;
}

void MomentAccumulator::add(std::span<const double> v, double log_weight) {
  if (v.size() != wv_.size()) throw std::invalid_argument("MomentAccumulator: dimension mismatch");
  if (log_weight > log_shift_) rescale(log_weight);
  const double w = std::exp(log_weight - log_shift_);
  const double w2 = w * w;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    wv_[i] += w * x;
    wv2_[i] += w * x * x;
    w2v_[i] += w2 * x;
    w2v2_[i] += w2 * x * x;
  }
  wsum_ += w;
  w2sum_ += w2;
  ++count_;
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  if (other.wv_.size() != wv_.size())
    throw std::invalid_argument("MomentAccumulator: dimension mismatch in merge");
  MomentAccumulator rhs = other;
  const double shift = (log_shift_ > rhs.log_shift_) ? log_shift_ : rhs.log_shift_;
  rescale(shift);
  rhs.rescale(shift);
  for (std::size_t i = 0; i < wv_.size(); ++i) {
    wv_[i] += rhs.wv_[i];
    wv2_[i] += rhs.wv2_[i];
    w2v_[i] += rhs.w2v_[i];
    w2v2_[i] += rhs.w2v2_[i];
  }
  wsum_ += rhs.wsum_;
  w2sum_ += rhs.w2sum_;
  count_ += rhs.count_;
}

double MomentAccumulator::stderror(std::size_t i) const {
  const double m = mean(i);
  const double num = w2v2_[i] - 2.0 * m * w2v_[i] + m * m * w2sum_;
  return std::sqrt(std::max(0.0, num)) / wsum_;
}

double MomentAccumulator::effective_sample_size() const {
  return (w2sum_ > 0.0) ? wsum_ * wsum_ / w2sum_ : 0.0;
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

constexpr long long kBlockSize = 4096;

template <class BlockFn>
void run_blocks(long long n_blocks, int workers, const BlockFn& block_fn) {
  if (workers <= 1 || n_blocks <= 1) {
    for (long long b = 0; b < n_blocks; ++b) block_fn(b);
    return;
  }
  std::atomic<long long> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const long long b = next.fetch_add(1);
      if (b >= n_blocks || failed.load()) return;
      try {
        block_fn(b);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = static_cast<int>(std::min<long long>(workers, n_blocks));
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

ReplicateSummary run_replicates(long long replicates, std::uint64_t seed, int workers,
                                std::size_t dim, const ReplicateEval& eval) {
  if (replicates < 1) throw std::invalid_argument("run_replicates: replicates >= 1 required");
  const long long n_blocks = (replicates + kBlockSize - 1) / kBlockSize;
  std::vector<MomentAccumulator> partials(n_blocks, MomentAccumulator(dim));

  run_blocks(n_blocks, resolve_workers(workers), [&](long long b) {
    std::vector<double> scratch(dim);
    MomentAccumulator& acc = partials[b];
    const long long lo = b * kBlockSize;
    const long long hi = std::min(replicates, lo + kBlockSize);
    for (long long r = lo; r < hi; ++r) {
      RngStream rng(seed, static_cast<std::uint64_t>(r));
      const double logw = eval(static_cast<std::uint64_t>(r), rng, scratch);
      acc.add(scratch, logw);
    }
  });

  MomentAccumulator total(dim);
  for (const auto& p : partials) total.merge(p);

  ReplicateSummary out;
  out.replicates = replicates;
  out.mean.resize(dim);
  out.se.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    out.mean[i] = total.mean(i);
    out.se[i] = total.stderror(i);
  }
  out.effective_sample_size = total.effective_sample_size();
  return out;
}

void run_replicates_collect(long long replicates, std::uint64_t seed, int workers,
                            const std::function<void(std::uint64_t, RngStream&)>& eval) {
  if (replicates < 1) throw std::invalid_argument("run_replicates_collect: replicates >= 1 required");
  const long long n_blocks = (replicates + kBlockSize - 1) / kBlockSize;
  run_blocks(n_blocks, resolve_workers(workers), [&](long long b) {
    const long long lo = b * kBlockSize;
    const long long hi = std::min(replicates, lo + kBlockSize);
    for (long long r = lo; r < hi; ++r) {
      RngStream rng(seed, static_cast<std::uint64_t>(r));
      eval(static_cast<std::uint64_t>(r), rng);
    }
  });
}

}  // namespace bpre
