#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dirm/gibbs.hpp"
#include "dirm/model.hpp"
#include "dirm/simgen.hpp"

namespace dirm {

struct SamplerConfig {
  std::size_t n_iterations = 50000;
  std::size_t burn_in = 30000;
  std::size_t thin = 10;
  std::uint64_t seed = 1;
  Mode mode = Mode::retrospective;
  /// phi^{-1/2}; required in online mode, where phi is held fixed.
  std::optional<double> fixed_drift_sd;
  unsigned threads = 0;

  /// Throws ConfigError unless burn_in < n_iterations, thin >= 1 and, in
  /// online mode, fixed_drift_sd > 0.
  void validate() const;
  std::size_t num_draws() const noexcept { return (n_iterations - burn_in) / thin; }
};

enum class Quantity { theta, growth, drift_sd, day_effect_sd, test_effect_sd };

const char* quantity_name(Quantity q) noexcept;
/// Throws ArgumentError on an unknown name.
Quantity quantity_from_name(const std::string& name);

/// Identifies one scalar unknown. Individual and day are 0-based individual
/// index and model day (0 = initial ability); absent where not applicable.
struct SeriesKey {
  Quantity quantity = Quantity::theta;
  std::optional<std::size_t> individual;
  std::optional<std::size_t> day;

  friend bool operator==(const SeriesKey&, const SeriesKey&) = default;
  friend auto operator<=>(const SeriesKey&, const SeriesKey&) = default;
};

struct SummaryRow {
  SeriesKey key;
  double q025 = 0.0;
  double median = 0.0;
  double q975 = 0.0;
};

struct TruthRow {
  SeriesKey key;
  double value = 0.0;
};

/// Empirical quantiles with linear interpolation between order statistics
/// (type 7). Throws ArgumentError on empty draws or probabilities outside [0,1].
std::vector<double> summarize(std::span<const double> draws, std::span<const double> probabilities);

/// Median and 2.5% / 97.5% quantiles.
SummaryRow summarize_series(const SeriesKey& key, std::span<const double> draws);

/// Thinned post-burn-in draws and their summaries for one chain.
struct ChainOutput {
  std::vector<SeriesKey> keys;
  std::size_t num_draws = 0;
  std::vector<double> draws;              // key-major: draws[k * num_draws + d]
  std::vector<std::size_t> iterations;    // 1-based iteration of each kept draw
  std::vector<SummaryRow> summaries;      // one per key
  std::size_t n_iterations = 0;
  std::size_t burn_in = 0;
  std::size_t thin = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  LatentState final_state;

  std::span<const double> series(std::size_t key) const {
    return std::span<const double>(draws).subspan(key * num_draws, num_draws);
  }
  const SummaryRow* find(const SeriesKey& key) const;
};

/// Series keys recorded by a fit: theta_{i,t} for t = 0..T_i, c_i, delta_i^{-1/2},
/// tau_i^{-1/2}, phi^{-1/2}.
std::vector<SeriesKey> fit_keys(const Dataset& data);

/// Retrospective fit (or a single fixed-phi fit in online mode). Validates
/// the dataset and throws ValidationError naming the first violated clause.
ChainOutput fit(const Dataset& data, const ModelConstants& constants, const SamplerConfig& config);

/// Runs `chains` chains seeded derive_seed(seed, chain); chain 0 reuses `seed`.
std::vector<ChainOutput> fit_chains(const Dataset& data, const ModelConstants& constants,
                                    const SamplerConfig& config, std::size_t chains);

/// Quantiles of the pooled draws of several chains (same keys).
std::vector<SummaryRow> pool_summaries(std::span<const ChainOutput> chains);

/// Lower-level chain runner: no dataset gate, caller-supplied initial state
/// and frozen-precision flags.
struct ChainRequest {
  const Dataset* data = nullptr;
  const ModelConstants* constants = nullptr;
  SamplerConfig config;
  std::optional<LatentState> initial;
  std::vector<bool> frozen_precisions;
  /// Record only these keys (empty: all fit_keys).
  std::vector<SeriesKey> keys;
};
ChainOutput run_chain(const ChainRequest& request);

struct CoverageReport {
  std::vector<double> theta_per_individual;
  double theta_overall = 0.0;
  std::size_t theta_points = 0;
  std::size_t parameters_total = 0;
  std::size_t parameters_covered = 0;
  double parameter_fraction = 0.0;
  std::optional<bool> drift_sd_covered;
  std::vector<std::pair<SeriesKey, bool>> parameter_hits;
};

/// Fraction of truth values inside [q2.5, q97.5]. Ability coverage counts
/// days 1..T_i; parameters are c_i, tau_i^{-1/2}, delta_i^{-1/2}, phi^{-1/2}.
/// Throws ArgumentError when a truth ability has no summary row.
CoverageReport coverage(std::span<const SummaryRow> summary, std::span<const TruthRow> truth);

/// Truth rows of a simulation in fit_keys form (sd parameterization).
std::vector<TruthRow> truth_rows(const Dataset& data, const SimTruth& truth);

struct OnlineEstimate {
  std::size_t day = 0;  // model day, 1..T_i
  double q025 = 0.0;
  double median = 0.0;
  double q975 = 0.0;
  /// Prefix failed the propriety clauses; tau_i and delta_i were held at 1.
  bool relaxed = false;
};

/// Per individual, one estimate per day from refits on the data prefix.
struct OnlineResult {
  std::vector<std::vector<OnlineEstimate>> trajectories;
};

/// Online estimation with phi^{-1/2} = config.fixed_drift_sd. Each
/// individual's day-t estimate comes from a chain on days 1..t only, seeded
/// by (seed, individual, t) and warm-started from the day t-1 chain with
/// 20% of the burn-in.
OnlineResult fit_online(const Dataset& data, const ModelConstants& constants,
                        const SamplerConfig& config);

/// Default phi^{-1/2} for online mode.
inline constexpr double kDefaultOnlineDriftSd = 0.0612;

struct TestScore {
  double difficulty = 0.0;
  std::size_t items = 0;
  std::size_t correct = 0;
};

struct RawScoreEstimate {
  double theta = 0.0;
  bool saturated = false;
};

/// Solves sum_s K_s logistic(theta - a_s) = number correct by bisection to
/// 1e-10. All-correct or all-incorrect returns a_max + 6 or a_min - 6 with
/// `saturated` set. Throws ArgumentError when there are no items.
RawScoreEstimate raw_score_estimate(std::span<const TestScore> tests);

/// raw_score_estimate for every (individual, day).
std::vector<std::vector<RawScoreEstimate>> raw_score_estimates(const Dataset& data);

}  // namespace dirm
