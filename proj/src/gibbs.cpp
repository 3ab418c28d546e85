#include "dirm/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include <oneapi/tbb/parallel_for.h>
#include <oneapi/tbb/task_arena.h>

#include "dirm/distributions.hpp"
#include "dirm/error.hpp"

namespace dirm {

namespace {

std::string at_individual(std::size_t i) { return " (individual " + std::to_string(i + 1) + ")"; }

// Rethrows the in-flight dirm exception with `context` prepended, keeping its type.
[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const ArgumentError& e) {
    throw ArgumentError(context + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(context + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(context + ": " + e.what());
  } catch (const std::exception& e) {
    throw NumericError(context + ": " + e.what());
  }
}

template <typename F>
void with_context(const char* update, std::size_t individual, F&& f) {
  try {
    f();
  } catch (...) {
    rethrow_with_context(std::string(update) + at_individual(individual));
  }
}

double draw_gamma_guarded(Rng& rng, const char* what, const std::function<GammaParams()>& params,
                          const RedrawFn& redraw) {
  GammaParams p = params();
  if (!(p.shape > 0.0)) {
    throw ConfigError(std::string(what) + ": nonpositive gamma shape " + std::to_string(p.shape) +
                      "; the dataset does not satisfy the validation gate");
  }
  if (!(p.rate > 0.0)) {
    if (redraw) {
      redraw();
      p = params();
    }
    if (!(p.rate > 0.0)) {
      throw NumericError(std::string(what) + ": degenerate gamma rate " + std::to_string(p.rate) +
                         " after redraw of the latent block");
    }
  }
  return sample_gamma(rng, p.shape, p.rate);
}

}  // namespace

ModelContext::ModelContext(const Dataset& data, const ModelConstants& constants)
    : data_(&data),
      constants_(constants),
      inv_rho_(1.0 / constants.rho),
      sigma2_(constants.sigma * constants.sigma) {
  constants.validate();
  constants.check_groups(data);
  lapse_.resize(data.num_days_total());
  lapse_plus_.resize(data.num_days_total());
  for (std::size_t d = 0; d < data.num_days_total(); ++d) {
    lapse_[d] = data.lapse(d);
    lapse_plus_[d] = std::min(data.lapse(d), constants.delta_tmax);
  }
}

std::span<const double> ModelContext::lapse_plus_of(std::size_t i) const noexcept {
  const IndexRange dr = data_->days(i);
  return std::span<const double>(lapse_plus_).subspan(dr.begin, dr.size());
}

std::span<const double> ModelContext::lapse_of(std::size_t i) const noexcept {
  const IndexRange dr = data_->days(i);
  return std::span<const double>(lapse_).subspan(dr.begin, dr.size());
}

void update_latent_utilities(Rng& rng, const ModelContext& ctx, LatentState& state,
                             std::size_t i) {
  const Dataset& data = ctx.data();
  const IndexRange dr = data.days(i);
  const std::size_t th = data.theta_begin(i);
  for (std::size_t d = dr.begin; d < dr.end; ++d) {
    const double base = state.theta[th + (d - dr.begin) + 1] + state.day_effect[d];
    const IndexRange tr = data.tests(d);
    for (std::size_t s = tr.begin; s < tr.end; ++s) {
      const double mean = base - data.difficulty(s) + state.test_effect[s];
      const IndexRange ir = data.items(s);
      for (std::size_t l = ir.begin; l < ir.end; ++l) {
        const double nu = state.ks_scale[l];
        const double variance = 4.0 * nu * nu + ctx.sigma2();
        state.latent_utility[l] = sample_truncated_normal(
            rng, mean, variance, data.response(l) == 1 ? Side::positive : Side::negative);
      }
    }
  }
}

void day_observations(const ModelContext& ctx, const LatentState& state, std::size_t i,
                      std::vector<DayObservations>& out) {
  const Dataset& data = ctx.data();
  const IndexRange dr = data.days(i);
  out.resize(dr.size());
  for (std::size_t d = dr.begin; d < dr.end; ++d) {
    DayObservations obs;
    const double day_shift = -state.day_effect[d] - ctx.inv_rho();
    const IndexRange tr = data.tests(d);
    for (std::size_t s = tr.begin; s < tr.end; ++s) {
      const double shift = data.difficulty(s) - state.test_effect[s] + day_shift;
      const IndexRange ir = data.items(s);
      for (std::size_t l = ir.begin; l < ir.end; ++l) {
        const double psi = ctx.psi(state.ks_scale[l]);
        obs.psi_sum += psi;
        obs.psi_z_sum += psi * (state.latent_utility[l] + shift);
      }
    }
    out[d - dr.begin] = obs;
  }
}

PathModel path_model(const ModelContext& ctx, const LatentState& state, std::size_t i) {
  const GroupPrior& prior = ctx.constants().group_prior[ctx.data().group(i)];
  PathModel m;
  m.initial_mean = prior.mean;
  m.initial_variance = prior.variance;
  m.growth = state.growth[i];
  m.drift_precision = state.drift_precision;
  m.rho = ctx.constants().rho;
  m.lapse = ctx.lapse_of(i);
  m.lapse_plus = ctx.lapse_plus_of(i);
  m.individual = i;
  return m;
}

void update_abilities(Rng& rng, const ModelContext& ctx, LatentState& state,
                      SweepWorkspace& ws, std::size_t i) {
  day_observations(ctx, state, i, ws.observations);
  const PathModel model = path_model(ctx, state, i);
  forward_filter(model, ws.observations, ws.filter);
  const std::size_t T = ctx.data().num_days(i);
  backward_sample(rng, ws.filter, model,
                  std::span<double>(state.theta).subspan(ctx.data().theta_begin(i), T + 1));
}

NormalMoments growth_conditional(const ModelContext& ctx, const LatentState& state,
                                 std::size_t i) {
  const Dataset& data = ctx.data();
  const IndexRange dr = data.days(i);
  const double rho = ctx.constants().rho;
  const double* theta = state.theta.data() + data.theta_begin(i);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t t = 1; t <= dr.size(); ++t) {
    const std::size_t d = dr.begin + t - 1;
    const double x = (1.0 - rho * theta[t - 1]) * ctx.lapse_plus(d);
    num += x * (theta[t] - theta[t - 1]) / data.lapse(d);
    den += x * x / data.lapse(d);
  }
  const GrowthPrior& prior = ctx.constants().priors.growth;
  const double prior_precision = std::isinf(prior.variance) ? 0.0 : 1.0 / prior.variance;
  const double precision = state.drift_precision * den + prior_precision;
  if (!(precision > 0.0) || !std::isfinite(precision)) {
    throw NumericError("growth conditional has zero precision (all 1 - rho theta = 0)");
  }
  const double weighted = state.drift_precision * num + prior_precision * prior.mean;
  return {weighted / precision, 1.0 / precision};
}

void update_growth(Rng& rng, const ModelContext& ctx, LatentState& state, std::size_t i) {
  const NormalMoments m = growth_conditional(ctx, state, i);
  state.growth[i] = sample_truncated_normal(rng, m.mean, m.variance, Side::positive);
}

void update_test_effects(Rng& rng, const ModelContext& ctx, LatentState& state,
                         SweepWorkspace& ws, std::size_t i) {
  const Dataset& data = ctx.data();
  const IndexRange dr = data.days(i);
  const double tau = state.test_effect_precision[i];
  const double* theta = state.theta.data() + data.theta_begin(i);
  for (std::size_t d = dr.begin; d < dr.end; ++d) {
    const IndexRange tr = data.tests(d);
    const std::size_t S = tr.size();
    if (S == 1) {
      state.test_effect[tr.begin] = 0.0;
      continue;
    }
    // Per-test sums of psi and psi * Y*, Y* = Y - theta + a - day effect.
    ws.psi_sum.assign(S, 0.0);
    ws.psi_y_sum.assign(S, 0.0);
    const double shift = -theta[d - dr.begin + 1] - state.day_effect[d];
    for (std::size_t s = tr.begin; s < tr.end; ++s) {
      const IndexRange ir = data.items(s);
      const double a = data.difficulty(s);
      for (std::size_t l = ir.begin; l < ir.end; ++l) {
        const double psi = ctx.psi(state.ks_scale[l]);
        ws.psi_sum[s - tr.begin] += psi;
        ws.psi_y_sum[s - tr.begin] += psi * (state.latent_utility[l] + a + shift);
      }
    }
    // A' W A = diag(w_1..w_{S-1}) + w_S 11'; tau Sigma^{-1} = tau (I + 11').
    const auto m = static_cast<Eigen::Index>(S - 1);
    const double w_last = ws.psi_sum[S - 1];
    ws.precision.setConstant(m, m, w_last + tau);
    ws.rhs.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      ws.precision(k, k) += ws.psi_sum[k] + tau;
      ws.rhs[k] = ws.psi_y_sum[k] - ws.psi_y_sum[S - 1];
    }
    Eigen::LLT<Eigen::MatrixXd> llt(ws.precision);
    if (llt.info() != Eigen::Success) {
      throw NumericError("test-effect precision not positive definite on day " +
                         std::to_string(d - dr.begin + 1));
    }
    Eigen::VectorXd mean = llt.solve(ws.rhs);
    ws.draw.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) ws.draw[k] = rng.normal();
    llt.matrixU().solveInPlace(ws.draw);  // L^{-T} z has covariance P^{-1}
    double total = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double eta = mean[k] + ws.draw[k];
      state.test_effect[tr.begin + k] = eta;
      total += eta;
    }
    state.test_effect[tr.end - 1] = -total;
  }
}

GammaParams test_effect_precision_conditional(const ModelContext& ctx, const LatentState& state,
                                              std::size_t i) {
  const Dataset& data = ctx.data();
  const IndexRange dr = data.days(i);
  const PrecisionPrior& prior = ctx.constants().priors.test_effect;
  double half_dims = 0.0;
  double quad = 0.0;
  for (std::size_t d = dr.begin; d < dr.end; ++d) {
    const IndexRange tr = data.tests(d);
    half_dims += 0.5 * static_cast<double>(tr.size() - 1);
    // eta*' Sigma^{-1} eta* = sum_{s<S} eta_s^2 + (sum_{s<S} eta_s)^2.
    double partial = 0.0;
    for (std::size_t s = tr.begin; s + 1 < tr.end; ++s) {
      quad += state.test_effect[s] * state.test_effect[s];
      partial += state.test_effect[s];
    }
    quad += partial * partial;
  }
  return {prior.shape + half_dims, prior.rate + 0.5 * quad};
}

void update_test_effect_precision(Rng& rng, const ModelContext& ctx, LatentState& state,
                                  std::size_t i, const RedrawFn& redraw) {
  state.test_effect_precision[i] = draw_gamma_guarded(
      rng, "test-effect precision",
      [&] { return test_effect_precision_conditional(ctx, state, i); }, redraw);
}

void update_day_effects(Rng& rng, const ModelContext& ctx, LatentState& state, std::size_t i) {
  const Dataset& data = ctx.data();
  const IndexRange dr = data.days(i);
  const double delta = state.day_effect_precision[i];
  const double* theta = state.theta.data() + data.theta_begin(i);
  for (std::size_t d = dr.begin; d < dr.end; ++d) {
    const double th = theta[d - dr.begin + 1];
    double w = 0.0;
    double b = 0.0;
    const IndexRange tr = data.tests(d);
    for (std::size_t s = tr.begin; s < tr.end; ++s) {
      const double shift = -th + data.difficulty(s) - state.test_effect[s];
      const IndexRange ir = data.items(s);
      for (std::size_t l = ir.begin; l < ir.end; ++l) {
        const double psi = ctx.psi(state.ks_scale[l]);
        w += psi;
        b += psi * (state.latent_utility[l] + shift);
      }
    }
    const double precision = w + delta;
    state.day_effect[d] = b / precision + rng.normal() / std::sqrt(precision);
  }
}

GammaParams day_effect_precision_conditional(const ModelContext& ctx, const LatentState& state,
                                             std::size_t i) {
  const IndexRange dr = ctx.data().days(i);
  const PrecisionPrior& prior = ctx.constants().priors.day_effect;
  double ss = 0.0;
  for (std::size_t d = dr.begin; d < dr.end; ++d) ss += state.day_effect[d] * state.day_effect[d];
  return {prior.shape + 0.5 * static_cast<double>(dr.size()), prior.rate + 0.5 * ss};
}

void update_day_effect_precision(Rng& rng, const ModelContext& ctx, LatentState& state,
                                 std::size_t i, const RedrawFn& redraw) {
  state.day_effect_precision[i] = draw_gamma_guarded(
      rng, "day-effect precision",
      [&] { return day_effect_precision_conditional(ctx, state, i); }, redraw);
}

GammaParams drift_precision_conditional(const ModelContext& ctx, const LatentState& state) {
  const Dataset& data = ctx.data();
  const double rho = ctx.constants().rho;
  const PrecisionPrior& prior = ctx.constants().priors.drift;
  double ss = 0.0;
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    const IndexRange dr = data.days(i);
    const double* theta = state.theta.data() + data.theta_begin(i);
    for (std::size_t t = 1; t <= dr.size(); ++t) {
      const std::size_t d = dr.begin + t - 1;
      const double r = theta[t] - theta[t - 1] -
                       state.growth[i] * (1.0 - rho * theta[t - 1]) * ctx.lapse_plus(d);
      ss += r * r / data.lapse(d);
    }
  }
  return {prior.shape + 0.5 * static_cast<double>(data.num_days_total()), prior.rate + 0.5 * ss};
}

void update_drift_precision(Rng& rng, const ModelContext& ctx, LatentState& state,
                            const RedrawFn& redraw) {
  state.drift_precision = draw_gamma_guarded(
      rng, "drift precision", [&] { return drift_precision_conditional(ctx, state); }, redraw);
}

double ks_scale_log_ratio(double current, double proposal, double residual, double sigma2) {
  const double v_old = sigma2 + 4.0 * current * current;
  const double v_new = sigma2 + 4.0 * proposal * proposal;
  return 0.5 * std::log(v_old / v_new) - 0.5 * residual * residual * (1.0 / v_new - 1.0 / v_old);
}

double ks_scale_mh_step(Rng& rng, double current, double residual, double sigma2) {
  const double proposal = sample_ks(rng);
  const double log_ratio = ks_scale_log_ratio(current, proposal, residual, sigma2);
  if (log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio) return proposal;
  return current;
}

void update_ks_scales(Rng& rng, const ModelContext& ctx, LatentState& state, std::size_t i) {
  const Dataset& data = ctx.data();
  const IndexRange dr = data.days(i);
  const double* theta = state.theta.data() + data.theta_begin(i);
  for (std::size_t d = dr.begin; d < dr.end; ++d) {
    const double base = -theta[d - dr.begin + 1] - state.day_effect[d];
    const IndexRange tr = data.tests(d);
    for (std::size_t s = tr.begin; s < tr.end; ++s) {
      const double shift = base + data.difficulty(s) - state.test_effect[s];
      const IndexRange ir = data.items(s);
      for (std::size_t l = ir.begin; l < ir.end; ++l) {
        state.ks_scale[l] =
            ks_scale_mh_step(rng, state.ks_scale[l], state.latent_utility[l] + shift, ctx.sigma2());
      }
    }
  }
}

struct GibbsSampler::Arena {
  explicit Arena(int threads) : arena(threads) {}
  oneapi::tbb::task_arena arena;
};

GibbsSampler::GibbsSampler(const Dataset& data, const ModelConstants& constants,
                           SweepOptions options)
    : ctx_(data, constants), options_(std::move(options)) {
  const std::size_t n = data.num_individuals();
  if (options_.mode == Mode::online && !options_.fixed_drift_precision) {
    throw ConfigError("online mode requires a fixed drift precision");
  }
  if (options_.fixed_drift_precision && !(*options_.fixed_drift_precision > 0.0)) {
    throw ConfigError("fixed drift precision must be > 0");
  }
  if (options_.frozen_precisions.empty()) options_.frozen_precisions.assign(n, false);
  if (options_.frozen_precisions.size() != n) {
    throw ConfigError("frozen_precisions must have one entry per individual");
  }
  workspaces_.resize(n);
  rngs_.resize(n);
  unsigned threads = options_.threads;
  const unsigned hardware = std::max(1u, std::thread::hardware_concurrency());
  threads = threads == 0 ? hardware : std::min(threads, hardware);
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  arena_ = std::make_unique<Arena>(static_cast<int>(threads));
}

GibbsSampler::~GibbsSampler() = default;

void GibbsSampler::individual_first_half(Rng& rng, LatentState& state, std::size_t i) {
  SweepWorkspace& ws = workspaces_[i];
  with_context("latent utilities", i, [&] { update_latent_utilities(rng, ctx_, state, i); });
  with_context("abilities", i, [&] { update_abilities(rng, ctx_, state, ws, i); });
  with_context("growth", i, [&] { update_growth(rng, ctx_, state, i); });
  with_context("test effects", i, [&] { update_test_effects(rng, ctx_, state, ws, i); });
  if (!options_.frozen_precisions[i]) {
    with_context("test-effect precision", i, [&] {
      update_test_effect_precision(rng, ctx_, state, i,
                                   [&] { update_test_effects(rng, ctx_, state, ws, i); });
    });
  }
  with_context("day effects", i, [&] { update_day_effects(rng, ctx_, state, i); });
  if (!options_.frozen_precisions[i]) {
    with_context("day-effect precision", i, [&] {
      update_day_effect_precision(rng, ctx_, state, i,
                                  [&] { update_day_effects(rng, ctx_, state, i); });
    });
  }
}

void GibbsSampler::sweep(LatentState& state, std::uint64_t seed, std::uint64_t sweep_index) {
  const std::size_t n = ctx_.data().num_individuals();
  for (std::size_t i = 0; i < n; ++i) rngs_[i].reseed(derive_seed(seed, sweep_index, i, 0));

  auto for_individuals = [&](auto&& body) {
    if (n == 1 || arena_->arena.max_concurrency() == 1) {
      for (std::size_t i = 0; i < n; ++i) body(i);
      return;
    }
    arena_->arena.execute([&] {
      oneapi::tbb::parallel_for(std::size_t{0}, n, [&](std::size_t i) { body(i); });
    });
  };

  for_individuals([&](std::size_t i) { individual_first_half(rngs_[i], state, i); });

  if (options_.fixed_drift_precision) {
    state.drift_precision = *options_.fixed_drift_precision;
  } else {
    Rng global(derive_seed(seed, sweep_index, 0, 1));
    try {
      update_drift_precision(global, ctx_, state, [&] {
        for (std::size_t i = 0; i < n; ++i) update_abilities(global, ctx_, state, workspaces_[i], i);
      });
    } catch (...) {
      rethrow_with_context("drift precision (sweep " + std::to_string(sweep_index) + ")");
    }
  }

  for_individuals([&](std::size_t i) {
    with_context("K-S scales", i, [&] { update_ks_scales(rngs_[i], ctx_, state, i); });
  });
}

std::string check_state_invariants(const Dataset& data, const LatentState& state) {
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    if (!(state.growth[i] >= 0.0)) return "negative growth" + at_individual(i);
    if (!(state.day_effect_precision[i] > 0.0)) return "nonpositive delta" + at_individual(i);
    if (!(state.test_effect_precision[i] > 0.0)) return "nonpositive tau" + at_individual(i);
    const IndexRange dr = data.days(i);
    for (std::size_t d = dr.begin; d < dr.end; ++d) {
      const IndexRange tr = data.tests(d);
      double sum = 0.0;
      for (std::size_t s = tr.begin; s < tr.end; ++s) sum += state.test_effect[s];
      if (std::abs(sum) > 1e-12) return "test effects do not sum to zero" + at_individual(i);
      if (tr.size() == 1 && state.test_effect[tr.begin] != 0.0) {
        return "single-test day with nonzero test effect" + at_individual(i);
      }
    }
  }
  if (!(state.drift_precision > 0.0)) return "nonpositive drift precision";
  for (std::size_t l = 0; l < data.num_items_total(); ++l) {
    const bool positive = state.latent_utility[l] > 0.0;
    if (positive != (data.response(l) == 1)) return "latent utility sign disagrees with response";
    if (!(state.ks_scale[l] > 0.0)) return "nonpositive K-S scale";
  }
  return {};
}

}  // namespace dirm
