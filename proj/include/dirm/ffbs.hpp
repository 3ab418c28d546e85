#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dirm/rng.hpp"

namespace dirm {

/// Pseudo-observations of lambda_t = theta_t - 1/rho on one day, reduced to
/// their sufficient statistics: sum of psi and sum of psi * Z over the day's
/// items, where Z = Y + a - day_effect - test_effect - 1/rho.
struct DayObservations {
  double psi_sum = 0.0;
  double psi_z_sum = 0.0;
};

/// Everything FFBS conditions on for one individual's ability path.
struct PathModel {
  double initial_mean = 0.0;      // mu_G of theta_0
  double initial_variance = 1.0;  // V_G of theta_0
  double growth = 0.0;            // c_i
  double drift_precision = 1.0;   // phi
  double rho = 0.118;
  std::span<const double> lapse;       // Delta_t, t = 1..T
  std::span<const double> lapse_plus;  // min(Delta_t, Delta_Tmax)
  std::size_t individual = 0;          // for error context only
};

/// Forward-filter moments of lambda. Index 0 holds the prior of lambda_0;
/// index t = 1..T holds day t. backward_* are filled by backward_sample.
struct FilterState {
  std::vector<double> transition;  // g_t = 1 - c rho Delta+_t (index 0 unused)
  std::vector<double> prior_mean;  // d_t
  std::vector<double> prior_var;   // R_t
  std::vector<double> post_mean;   // mu_t
  std::vector<double> post_var;    // V_t
  std::vector<double> backward_mean;  // h_t
  std::vector<double> backward_var;   // H_t

  std::size_t num_days() const noexcept { return post_mean.size() - 1; }
};

/// Kalman recursion of the scalar DLM lambda_t = g_t lambda_{t-1} + w_t,
/// w_t ~ N(0, Delta_t / phi), Z ~ N(lambda_t, 1/psi).
/// Throws NumericError (with individual and day) when a variance leaves
/// [1e-300, inf) or a mean is not finite.
FilterState forward_filter(const PathModel& model, std::span<const DayObservations> days);

/// Same, reusing `filter`'s storage.
void forward_filter(const PathModel& model, std::span<const DayObservations> days,
                    FilterState& filter);

/// Draws lambda_T, ..., lambda_0 from the backward conditionals and writes
/// theta_t = lambda_t + 1/rho into `theta` (length T + 1).
void backward_sample(Rng& rng, FilterState& filter, const PathModel& model,
                     std::span<double> theta);

}  // namespace dirm
