#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dirm {

/// One observed item response as it appears in the responses CSV, 0-based.
struct ResponseRecord {
  std::size_t individual = 0;
  std::size_t day = 0;
  std::size_t test = 0;
  std::size_t item = 0;
  int response = 0;
  double difficulty = 0.0;  // ensemble mean difficulty of the test, logits
};

struct LapseRecord {
  std::size_t individual = 0;
  std::size_t day = 0;
  double lapse_days = 0.0;
};

struct GroupRecord {
  std::size_t individual = 0;
  std::size_t group = 0;
};

/// Half-open index range into one of the flattened arrays.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
};

/// Observed responses indexed (individual, day, test, item), ragged at every
/// level and stored flat with per-level offset tables. Days, tests and items
/// carry global indices; `days(i)` gives individual i's slice of the day
/// table, `tests(d)` the slice of the test table for global day d, and so on.
/// Day t of an individual (0-based) is the model's day t+1; the initial
/// ability theta_{i,0} has no observations.
class Dataset {
 public:
  Dataset() = default;

  /// Builds a dataset from unordered records. Throws ConfigError when the
  /// records are inconsistent: gaps in any index level, a test whose items
  /// disagree on difficulty, a missing or nonpositive lapse, a response
  /// outside {0,1}, or a missing group.
  static Dataset from_records(std::span<const ResponseRecord> responses,
                              std::span<const LapseRecord> lapses,
                              std::span<const GroupRecord> groups);

  std::size_t num_individuals() const noexcept { return group_.size(); }
  std::size_t num_days_total() const noexcept { return lapse_.size(); }
  std::size_t num_tests_total() const noexcept { return difficulty_.size(); }
  std::size_t num_items_total() const noexcept { return response_.size(); }

  IndexRange days(std::size_t individual) const noexcept {
    return {day_offset_[individual], day_offset_[individual + 1]};
  }
  std::size_t num_days(std::size_t individual) const noexcept {
    return days(individual).size();
  }
  IndexRange tests(std::size_t day) const noexcept {
    return {test_offset_[day], test_offset_[day + 1]};
  }
  IndexRange items(std::size_t test) const noexcept {
    return {item_offset_[test], item_offset_[test + 1]};
  }
  /// Items of a whole day (tests of a day are contiguous, so are their items).
  IndexRange day_items(std::size_t day) const noexcept {
    const IndexRange t = tests(day);
    return {item_offset_[t.begin], item_offset_[t.end]};
  }
  /// Position of theta_{i,0} in a flat ability array of length
  /// num_days_total() + num_individuals().
  std::size_t theta_begin(std::size_t individual) const noexcept {
    return day_offset_[individual] + individual;
  }

  int response(std::size_t item) const noexcept { return response_[item]; }
  double difficulty(std::size_t test) const noexcept { return difficulty_[test]; }
  double lapse(std::size_t day) const noexcept { return lapse_[day]; }
  std::size_t group(std::size_t individual) const noexcept { return group_[individual]; }
  std::size_t num_groups() const noexcept;
  /// Global test index of an item.
  std::size_t test_of_item(std::size_t item) const noexcept { return item_test_[item]; }

  /// Records for serialization, in canonical (individual, day, test, item) order.
  std::vector<ResponseRecord> response_records() const;
  std::vector<LapseRecord> lapse_records() const;
  std::vector<GroupRecord> group_records() const;

  /// Single-individual dataset holding the first `num_days` days of `individual`.
  Dataset prefix(std::size_t individual, std::size_t num_days) const;

  /// FNV-1a over the canonical serialization; stable across write/read.
  std::uint64_t checksum() const;

 private:
  std::vector<std::size_t> day_offset_{0};
  std::vector<std::size_t> test_offset_{0};
  std::vector<std::size_t> item_offset_{0};
  std::vector<std::size_t> item_test_;
  std::vector<std::uint8_t> response_;
  std::vector<double> difficulty_;
  std::vector<double> lapse_;
  std::vector<std::size_t> group_;
};

struct GroupPrior {
  double mean = 0.0;      // logits
  double variance = 1.0;  // logits^2
};

/// Gamma-form prior on a precision: contributes `shape` to the full
/// conditional's shape and `rate` to its rate. The objective prior
/// pi(x) proportional to x^{-3/2} is shape = -1/2, rate = 0.
struct PrecisionPrior {
  double shape = -0.5;
  double rate = 0.0;
};

/// Prior on the growth rate c_i: N(mean, variance) restricted to c > 0.
/// Infinite variance is the flat prior on (0, inf).
struct GrowthPrior {
  double mean = 0.0;
  double variance = std::numeric_limits<double>::infinity();
};

struct Priors {
  GrowthPrior growth;
  PrecisionPrior drift;
  PrecisionPrior day_effect;
  PrecisionPrior test_effect;

  bool objective() const noexcept;
};

/// Known quantities of the model.
struct ModelConstants {
  double sigma = 0.7333;     // sd of within-test item difficulty deviations
  double rho = 0.1180;       // growth deceleration rate
  double delta_tmax = 14.0;  // growth truncation horizon, days
  std::vector<GroupPrior> group_prior{GroupPrior{}};
  Priors priors;

  /// Throws ConfigError on nonpositive sigma, rho, delta_tmax or group variance.
  void validate() const;
  /// Throws ConfigError when the dataset references a group with no prior.
  void check_groups(const Dataset& data) const;
};

/// One Gibbs iteration's value of every unknown, flat-indexed like Dataset.
struct LatentState {
  std::vector<double> theta;                  // per individual: T_i + 1 entries
  std::vector<double> growth;                 // c_i >= 0
  double drift_precision = 1.0;               // phi
  std::vector<double> day_effect;             // per global day
  std::vector<double> day_effect_precision;   // delta_i
  std::vector<double> test_effect;            // per global test, sums to 0 per day
  std::vector<double> test_effect_precision;  // tau_i
  std::vector<double> latent_utility;         // Y per item
  std::vector<double> ks_scale;               // nu per item

  /// Initial values theta=0, c=0, phi=1, day effects=0, eta=0, delta=1,
  /// tau=1, nu=1; Y is set to +-1 to agree with the responses.
  static LatentState initial(const Dataset& data);
};

struct Violation {
  std::string clause;
  std::optional<std::size_t> individual;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool passed() const noexcept { return violations.empty(); }
  /// First violated clause, empty when passed.
  std::string first_clause() const;
  std::string to_string() const;
};

namespace clause {
inline constexpr const char* kMinIndividuals = "n ≥ 2";
inline constexpr const char* kMinDays = "T_i ≥ 2";
inline constexpr const char* kMixedTests =
    "two days with S_it ≥ 2 on which at least two tests have one 0 and one 1 observation";
inline constexpr const char* kTestPrecisionShape = "(sum_t S_it - (T_i + 1)) / 2 > 0";
inline constexpr const char* kDayPrecisionShape = "(T_i - 1) / 2 > 0";
inline constexpr const char* kDriftPrecisionShape = "(sum_i T_i - 1) / 2 > 0";
}  // namespace clause

/// Posterior propriety gate for the whole dataset.
ValidationReport validate_dataset(const Dataset& data);

/// Per-individual clauses only (everything except n ≥ 2 and the drift shape).
ValidationReport validate_individual(const Dataset& data, std::size_t individual);

}  // namespace dirm
