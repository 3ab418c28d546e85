#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dirm/ffbs.hpp"
#include "dirm/model.hpp"
#include "dirm/rng.hpp"

namespace dirm {

enum class Mode { retrospective, online };

/// Read-only quantities shared by all updates: the data, the constants and
/// values precomputed from them once (Delta+, 1/rho, sigma^2). The dataset is
/// referenced and must outlive the context; the constants are copied.
class ModelContext {
 public:
  ModelContext(const Dataset& data, const ModelConstants& constants);

  const Dataset& data() const noexcept { return *data_; }
  const ModelConstants& constants() const noexcept { return constants_; }
  double lapse_plus(std::size_t day) const noexcept { return lapse_plus_[day]; }
  std::span<const double> lapse_plus_of(std::size_t individual) const noexcept;
  std::span<const double> lapse_of(std::size_t individual) const noexcept;
  double inv_rho() const noexcept { return inv_rho_; }
  double sigma2() const noexcept { return sigma2_; }
  /// psi = 1 / (4 nu^2 + sigma^2), the precision of Y given everything but eps.
  double psi(double ks_scale) const noexcept {
    return 1.0 / (4.0 * ks_scale * ks_scale + sigma2_);
  }

 private:
  const Dataset* data_;
  ModelConstants constants_;
  std::vector<double> lapse_plus_;
  std::vector<double> lapse_;
  double inv_rho_;
  double sigma2_;
};

/// Per-individual scratch space, reused across sweeps.
struct SweepWorkspace {
  std::vector<DayObservations> observations;
  FilterState filter;
  Eigen::MatrixXd precision;  // A' Sigma_psi^{-1} A + tau Sigma^{-1}
  Eigen::VectorXd rhs;        // A' Sigma_psi^{-1} Y*
  Eigen::VectorXd draw;
  std::vector<double> psi_sum;    // per test of the current day
  std::vector<double> psi_y_sum;  // per test of the current day
};

// Full-conditional updates. Per-individual updates touch only that
// individual's slice of the state.

/// Y ~ N+/N-(theta - a + day effect + test effect, 4 nu^2 + sigma^2).
void update_latent_utilities(Rng& rng, const ModelContext& ctx, LatentState& state,
                             std::size_t individual);

/// Sufficient statistics of the pseudo-observations Z for FFBS.
void day_observations(const ModelContext& ctx, const LatentState& state,
                      std::size_t individual, std::vector<DayObservations>& out);

/// The path model FFBS conditions on for one individual.
PathModel path_model(const ModelContext& ctx, const LatentState& state, std::size_t individual);

/// theta_i block update by forward filtering, backward sampling.
void update_abilities(Rng& rng, const ModelContext& ctx, LatentState& state,
                      SweepWorkspace& ws, std::size_t individual);

/// Mean and variance of the (untruncated) normal kernel of c_i's full conditional.
struct NormalMoments {
  double mean = 0.0;
  double variance = 0.0;
};
NormalMoments growth_conditional(const ModelContext& ctx, const LatentState& state,
                                 std::size_t individual);

/// c_i ~ N+(m_i, v_i).
void update_growth(Rng& rng, const ModelContext& ctx, LatentState& state,
                   std::size_t individual);

/// eta*_{i,t} from its (S-1)-variate normal conditional, eta_S = -sum eta*.
void update_test_effects(Rng& rng, const ModelContext& ctx, LatentState& state,
                         SweepWorkspace& ws, std::size_t individual);

struct GammaParams {
  double shape = 0.0;
  double rate = 0.0;
};
GammaParams test_effect_precision_conditional(const ModelContext& ctx, const LatentState& state,
                                              std::size_t individual);
GammaParams day_effect_precision_conditional(const ModelContext& ctx, const LatentState& state,
                                             std::size_t individual);
GammaParams drift_precision_conditional(const ModelContext& ctx, const LatentState& state);

/// Called once when a gamma full conditional has a zero rate; should
/// re-draw the latent block the rate is computed from.
using RedrawFn = std::function<void()>;

/// tau_i ~ Ga(shape, rate). Throws ConfigError on a nonpositive shape and
/// NumericError when the rate stays degenerate after one redraw.
void update_test_effect_precision(Rng& rng, const ModelContext& ctx, LatentState& state,
                                  std::size_t individual, const RedrawFn& redraw = {});

/// Daily effects ~ N(sum psi r / (sum psi + delta), 1 / (sum psi + delta)).
void update_day_effects(Rng& rng, const ModelContext& ctx, LatentState& state,
                        std::size_t individual);

/// delta_i ~ Ga((T_i - 1)/2, sum_t day_effect^2 / 2).
void update_day_effect_precision(Rng& rng, const ModelContext& ctx, LatentState& state,
                                 std::size_t individual, const RedrawFn& redraw = {});

/// phi ~ Ga((sum T_i - 1)/2, sum of scaled squared system residuals / 2).
void update_drift_precision(Rng& rng, const ModelContext& ctx, LatentState& state,
                            const RedrawFn& redraw = {});

/// One independence Metropolis–Hastings step for a K–S scale with the K–S
/// law as proposal. Returns the new value.
double ks_scale_mh_step(Rng& rng, double current, double residual, double sigma2);

/// Log acceptance ratio of moving the K–S scale from `current` to `proposal`.
double ks_scale_log_ratio(double current, double proposal, double residual, double sigma2);

/// One MH step per item of the individual.
void update_ks_scales(Rng& rng, const ModelContext& ctx, LatentState& state,
                      std::size_t individual);

struct SweepOptions {
  Mode mode = Mode::retrospective;
  /// Held fixed (and not updated) in online mode.
  std::optional<double> fixed_drift_precision;
  /// Per individual: skip the tau_i and delta_i updates.
  std::vector<bool> frozen_precisions;
  /// 0 = hardware concurrency.
  unsigned threads = 0;
};

/// Composes the nine updates in the fixed order Y, theta, c, eta, tau,
/// daily effects, delta, phi, nu. Individual-level work runs concurrently,
/// each individual drawing from its own stream derive_seed(seed, sweep, i),
/// so the result is independent of scheduling.
class GibbsSampler {
 public:
  GibbsSampler(const Dataset& data, const ModelConstants& constants, SweepOptions options);
  ~GibbsSampler();
  GibbsSampler(const GibbsSampler&) = delete;
  GibbsSampler& operator=(const GibbsSampler&) = delete;

  void sweep(LatentState& state, std::uint64_t seed, std::uint64_t sweep_index);

  const ModelContext& context() const noexcept { return ctx_; }
  const SweepOptions& options() const noexcept { return options_; }

 private:
  void individual_first_half(Rng& rng, LatentState& state, std::size_t i);

  ModelContext ctx_;
  SweepOptions options_;
  std::vector<SweepWorkspace> workspaces_;
  std::vector<Rng> rngs_;
  struct Arena;
  std::unique_ptr<Arena> arena_;
};

/// Checks the LatentState invariants (sum-zero test effects, sign-consistent
/// utilities, positive precisions and scales, nonnegative growth). Returns an
/// empty string when all hold, else a description of the first failure.
std::string check_state_invariants(const Dataset& data, const LatentState& state);

}  // namespace dirm
