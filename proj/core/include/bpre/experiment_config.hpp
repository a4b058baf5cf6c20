#ifndef BPRE_EXPERIMENT_CONFIG_HPP
#define BPRE_EXPERIMENT_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bpre {

// Experiment names accepted by the runner.
const std::vector<std::string>& experiment_names();

struct AtomSpec {
  double a = 0.0;
  double p = 0.5;
  double weight = 1.0;
};

// Parsed experiment configuration. Fields required only by some experiments
// are optionals / defaulted; validate() reports everything missing or
// malformed for the chosen experiment in one pass.
struct ExperimentConfig {
  std::string experiment;
  std::optional<std::uint64_t> seed;  // mandatory, but absence must be reportable
  long long replicates = 100000;
  int workers = 0;  // 0: hardware concurrency

  std::vector<AtomSpec> atoms;
  std::optional<std::string> regime_tag;  // expected regime, verified when present

  std::optional<int> n;
  std::vector<int> n_grid;
  int z_max = 20;
  std::optional<int> c;
  std::optional<double> t;
  double t_lo = 0.3, t_hi = 0.7;
  std::vector<int> m_grid;
  std::vector<int> z_values{1, 3};
  std::vector<double> x_grid{0.5, 1.0, 2.0};

  double alpha = 2.0;
  double epsilon = 1.0;

  // truncation knobs: N survival horizon, M inner horizon, B rejection
  // extension, K series length / renewal truncation
  std::optional<long long> trunc_n, trunc_m, trunc_b, trunc_k;

  std::optional<long long> rhs_replicates;
  long long surrogate_replicates = 20000;
  long long inner_pool = 256;

  std::string config_hash;  // FNV-1a over the source text
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(std::vector<std::string> problems);
  std::vector<std::string> problems;
};

// Parses JSON text; throws ConfigError on syntax errors or bad field types.
ExperimentConfig parse_config(const std::string& json_text);
// Reads and parses a file; throws ConfigError (unreadable file included).
ExperimentConfig load_config(const std::string& path);

// All problems with the config for its chosen experiment; empty means valid.
std::vector<std::string> validate(const ExperimentConfig& cfg);
// Convenience: throws ConfigError when validate() is non-empty.
void validate_or_throw(const ExperimentConfig& cfg);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace bpre

#endif
