#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "dirm/model.hpp"

namespace dirm {

/// Forward-simulation design. `reference_design()` gives the ten-individual,
/// fifty-day design with four ten-item tests per day.
struct SimConfig {
  std::size_t n = 10;  // individuals
  std::size_t T = 50;  // days per individual
  std::size_t S = 4;   // tests per day
  std::size_t K = 10;  // items per test
  /// Lapse per day t = 1..T, shared by all individuals. Empty selects the
  /// default schedule 10 + t for t <= T/2 and max(1, t - 10) afterwards.
  std::vector<double> lapses;
  std::vector<double> growth;                 // c_i
  std::vector<double> day_effect_precision;   // delta_i (inf: no daily effects)
  std::vector<double> test_effect_precision;  // tau_i (inf: no test effects)
  double drift_precision = 1.0 / (0.0218 * 0.0218);  // phi (inf: deterministic paths)
  double sigma = 0.7333;
  double rho = 0.1180;
  double delta_tmax = 14.0;
  /// Test difficulty a = theta + zeta, zeta ~ Uniform(-w, w).
  double difficulty_halfwidth = 0.1;
  std::vector<GroupPrior> group_prior{GroupPrior{0.0, 1.0}};
  std::vector<std::size_t> groups;  // per individual; empty = all group 0
  std::uint64_t seed = 1;
  /// Redraw the Bernoulli layer (up to 100 times) until the dataset passes
  /// validate_dataset.
  bool require_valid = true;

  static SimConfig reference_design();
  /// First n individuals of the reference truth vectors with a smaller design.
  static SimConfig scaled(std::size_t n, std::size_t T, std::size_t S, std::size_t K);

  /// Throws ConfigError on counts < 1, vector sizes != n, nonpositive truth
  /// precisions or lapses.
  void validate() const;
  std::vector<double> lapse_schedule() const;
  /// Constants matching this design, for fitting the simulated data.
  ModelConstants model_constants() const;
};

/// Ground truth of a simulated dataset, index-aligned with it.
struct SimTruth {
  std::vector<double> theta;  // flat, T_i + 1 per individual
  std::vector<double> growth;
  std::vector<double> day_effect_precision;
  std::vector<double> test_effect_precision;
  double drift_precision = 0.0;
  std::vector<double> day_effect;       // per global day
  std::vector<double> test_effect;      // per global test
  std::vector<double> item_deviation;   // eps per item
};

std::pair<Dataset, SimTruth> simulate_dataset(const SimConfig& cfg);

}  // namespace dirm
