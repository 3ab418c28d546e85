#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "conditional_checks.hpp"
#include "dirm/error.hpp"
#include "dirm/ffbs.hpp"
#include "dirm/gibbs.hpp"
#include "dirm/simgen.hpp"
#include "test_support.hpp"

using namespace dirm;
using namespace dirm::testing;

namespace {

constexpr double kPi = 3.14159265358979323846;

// One individual, one day, tests of the given sizes, all responses 1.
Dataset single_day(const std::vector<int>& test_sizes, int response = 1) {
  ResponseCube x(1, std::vector<std::vector<std::vector<int>>>(1));
  for (int k : test_sizes) x[0][0].push_back(std::vector<int>(static_cast<std::size_t>(k), response));
  return make_dataset(x);
}

// nu such that 4 nu^2 + sigma^2 = target variance.
double nu_for_variance(double target, double sigma) {
  return std::sqrt((target - sigma * sigma) / 4.0);
}

}  // namespace

TEST_CASE("frozen-conditioning oracles for every single-block update") {
  for (const auto& c : run_conditional_checks(100000, 314)) {
    CAPTURE(c.name);
    CAPTURE(c.z_mean);
    CAPTURE(c.z_var);
    CHECK(c.pass());
  }
}

TEST_CASE("latent utility: half-normal oracle and truncation sides") {
  const Dataset d = single_day({1});
  ModelConstants mc;
  const ModelContext ctx(d, mc);
  LatentState s = LatentState::initial(d);
  s.ks_scale[0] = nu_for_variance(1.0, mc.sigma);
  Rng rng(1);
  Moments m;
  for (int k = 0; k < 100000; ++k) {
    update_latent_utilities(rng, ctx, s, 0);
    REQUIRE(s.latent_utility[0] > 0.0);
    m.add(s.latent_utility[0]);
  }
  CHECK(z_mean(m, std::sqrt(2.0 / kPi)) < 4.0);

  const Dataset zeros = single_day({3}, 0);
  const ModelContext zctx(zeros, mc);
  LatentState z = LatentState::initial(zeros);
  for (int k = 0; k < 1000; ++k) {
    update_latent_utilities(rng, zctx, z, 0);
    for (double y : z.latent_utility) REQUIRE(y <= 0.0);
  }
}

TEST_CASE("abilities update delegates to FFBS") {
  FrozenFixture fx;
  const ModelContext ctx(fx.data, fx.constants);
  LatentState s = fx.state;
  SweepWorkspace ws;
  Rng a(77), b(77);
  update_abilities(a, ctx, s, ws, 1);

  std::vector<DayObservations> obs;
  day_observations(ctx, fx.state, 1, obs);
  const PathModel model = path_model(ctx, fx.state, 1);
  FilterState f = forward_filter(model, obs);
  std::vector<double> theta(fx.data.num_days(1) + 1);
  backward_sample(b, f, model, theta);
  for (std::size_t t = 0; t < theta.size(); ++t) {
    CHECK(s.theta[fx.data.theta_begin(1) + t] == theta[t]);
  }
  // Individual 0 untouched.
  for (std::size_t t = 0; t <= fx.data.num_days(0); ++t) CHECK(s.theta[t] == fx.state.theta[t]);
}

TEST_CASE("growth conditional") {
  FrozenFixture fx;
  const ModelContext ctx(fx.data, fx.constants);
  const double rho = fx.constants.rho;

  SUBCASE("constant ability gives a half-normal") {
    LatentState s = fx.state;
    std::fill(s.theta.begin(), s.theta.end(), 0.4);
    const NormalMoments nm = growth_conditional(ctx, s, 0);
    CHECK(nm.mean == 0.0);
    Rng rng(3);
    Moments m;
    for (int k = 0; k < 100000; ++k) {
      update_growth(rng, ctx, s, 0);
      REQUIRE(s.growth[0] > 0.0);
      m.add(s.growth[0]);
    }
    CHECK(z_mean(m, std::sqrt(2.0 * nm.variance / kPi)) < 4.0);
  }
  SUBCASE("exact system-equation path recovers the growth rate") {
    LatentState s = fx.state;
    const double c = 0.0137;
    const IndexRange dr = fx.data.days(0);
    double* th = s.theta.data() + fx.data.theta_begin(0);
    for (std::size_t t = 1; t <= dr.size(); ++t) {
      const double lp = std::min(fx.data.lapse(dr.begin + t - 1), fx.constants.delta_tmax);
      th[t] = th[t - 1] + c * (1.0 - rho * th[t - 1]) * lp;
    }
    CHECK(std::abs(growth_conditional(ctx, s, 0).mean - c) < 1e-12);
  }
  SUBCASE("zero precision is a numeric error") {
    LatentState s = fx.state;
    std::fill(s.theta.begin(), s.theta.end(), 1.0 / rho);
    CHECK_THROWS_AS(growth_conditional(ctx, s, 0), NumericError);
  }
}

TEST_CASE("test effects") {
  ModelConstants mc;
  SUBCASE("single test per day is pinned to zero") {
    const Dataset d = single_day({4});
    const ModelContext ctx(d, mc);
    LatentState s = LatentState::initial(d);
    s.test_effect[0] = 0.5;
    SweepWorkspace ws;
    Rng rng(1);
    update_test_effects(rng, ctx, s, ws, 0);
    CHECK(s.test_effect[0] == 0.0);
  }
  SUBCASE("scalar conjugate case, S = 2 with unit weights") {
    const Dataset d = single_day({1, 1});
    const ModelContext ctx(d, mc);
    LatentState s = LatentState::initial(d);
    const double nu = nu_for_variance(1.0, mc.sigma);
    s.ks_scale = {nu, nu};
    s.latent_utility = {1.3, 0.4};
    s.test_effect_precision[0] = 1.0;
    // Precision w1 + w2 + 2 tau = 4; mean (y1 - y2) / 4.
    const double mean = (1.3 - 0.4) / 4.0;
    SweepWorkspace ws;
    Rng rng(8);
    std::vector<double> draws;
    for (int k = 0; k < 100000; ++k) {
      update_test_effects(rng, ctx, s, ws, 0);
      REQUIRE(std::abs(s.test_effect[0] + s.test_effect[1]) < 1e-12);
      draws.push_back(s.test_effect[0]);
    }
    const MomentCheck c = compare_moments("scalar eta", draws, mean, 0.25);
    CHECK(c.pass());
  }
  SUBCASE("sum-zero after every update") {
    FrozenFixture fx;
    const ModelContext ctx(fx.data, fx.constants);
    SweepWorkspace ws;
    Rng rng(2);
    for (int k = 0; k < 100; ++k) {
      update_test_effects(rng, ctx, fx.state, ws, 0);
      update_test_effects(rng, ctx, fx.state, ws, 1);
      CHECK(check_state_invariants(fx.data, fx.state).empty());
    }
  }
}

TEST_CASE("test-effect precision") {
  FrozenFixture fx;
  const ModelContext ctx(fx.data, fx.constants);
  const GammaParams p = test_effect_precision_conditional(ctx, fx.state, 0);
  LatentState doubled = fx.state;
  for (double& e : doubled.test_effect) e *= 2.0;
  const GammaParams q = test_effect_precision_conditional(ctx, doubled, 0);
  CHECK(q.shape == p.shape);
  CHECK(q.rate == doctest::Approx(4.0 * p.rate).epsilon(1e-14));
  Rng rng(4);
  Moments m1, m2;
  LatentState s1 = fx.state, s2 = doubled;
  for (int k = 0; k < 100000; ++k) {
    update_test_effect_precision(rng, ctx, s1, 0);
    update_test_effect_precision(rng, ctx, s2, 0);
    m1.add(s1.test_effect_precision[0]);
    m2.add(s2.test_effect_precision[0]);
  }
  CHECK(z_mean(m1, p.shape / p.rate) < 4.0);
  CHECK(z_mean(m2, p.shape / p.rate / 4.0) < 4.0);

  // T = 2 days with one test each: shape (2 - 3) / 2 < 0.
  const Dataset d = balanced_dataset(1, 2, 1, 2);
  const ModelContext c2(d, fx.constants);
  LatentState s = LatentState::initial(d);
  CHECK_THROWS_AS(update_test_effect_precision(rng, c2, s, 0), ConfigError);
}

TEST_CASE("day effects") {
  ModelConstants mc;
  const Dataset d = single_day({1});
  const ModelContext ctx(d, mc);
  SUBCASE("huge precision pins the effect at zero") {
    LatentState s = LatentState::initial(d);
    s.day_effect_precision[0] = 1e12;
    Rng rng(5);
    for (int k = 0; k < 1000; ++k) {
      update_day_effects(rng, ctx, s, 0);
      CHECK(std::abs(s.day_effect[0]) < 1e-4);
    }
  }
  SUBCASE("single item conjugate oracle") {
    LatentState s = LatentState::initial(d);
    s.ks_scale[0] = nu_for_variance(1.0, mc.sigma);
    s.latent_utility[0] = 0.9;
    s.theta = {0.0, 0.2};
    // r = Y - theta + a - eta = 0.7; mean r / 2, variance 1 / 2.
    Rng rng(6);
    std::vector<double> draws;
    for (int k = 0; k < 100000; ++k) {
      update_day_effects(rng, ctx, s, 0);
      draws.push_back(s.day_effect[0]);
    }
    CHECK(compare_moments("day effect", draws, 0.35, 0.5).pass());
  }
  SUBCASE("depends on Y and theta only through the residual") {
    LatentState a = LatentState::initial(d);
    LatentState b = a;
    b.latent_utility[0] += 0.8;
    b.theta[1] += 0.8;
    Rng r1(9), r2(9);
    update_day_effects(r1, ctx, a, 0);
    update_day_effects(r2, ctx, b, 0);
    CHECK(a.day_effect[0] == doctest::Approx(b.day_effect[0]).epsilon(1e-12));
  }
}

TEST_CASE("degenerate gamma rates") {
  const Dataset d = balanced_dataset(2, 2, 2, 2);
  ModelConstants mc;
  const ModelContext ctx(d, mc);
  Rng rng(1);
  SUBCASE("day-effect precision: redraw once, then abort") {
    LatentState s = LatentState::initial(d);
    int calls = 0;
    CHECK_THROWS_AS(update_day_effect_precision(rng, ctx, s, 0, [&] { ++calls; }), NumericError);
    CHECK(calls == 1);
    CHECK_THROWS_AS(update_day_effect_precision(rng, ctx, s, 0), NumericError);
    update_day_effect_precision(rng, ctx, s, 0, [&] { s.day_effect[0] = 0.3; });
    CHECK(s.day_effect_precision[0] > 0.0);
    // T_i = 2: shape 1/2 accepted.
    CHECK(day_effect_precision_conditional(ctx, s, 0).shape == 0.5);
  }
  SUBCASE("drift precision on exact system-equation paths") {
    LatentState s = LatentState::initial(d);  // theta = 0, c = 0: zero residuals
    CHECK(drift_precision_conditional(ctx, s).rate == 0.0);
    CHECK_THROWS_AS(update_drift_precision(rng, ctx, s), NumericError);
    SweepWorkspace ws;
    update_drift_precision(rng, ctx, s, [&] { update_abilities(rng, ctx, s, ws, 0); });
    CHECK(s.drift_precision > 0.0);
  }
}

TEST_CASE("K-S scale Metropolis-Hastings ratio") {
  const double sigma2 = 0.7333 * 0.7333;
  CHECK(ks_scale_log_ratio(0.8, 0.8, 1.7, sigma2) == 0.0);
  for (double cur : {0.5, 1.0, 2.0}) {
    CHECK(ks_scale_log_ratio(cur, cur * 0.5, 0.0, sigma2) > 0.0);
    CHECK(ks_scale_log_ratio(cur, cur * 2.0, 0.0, sigma2) < 0.0);
  }
  const double lr = ks_scale_log_ratio(0.6, 1.1, 0.0, sigma2);
  CHECK(lr == doctest::Approx(0.5 * std::log((sigma2 + 4 * 0.36) / (sigma2 + 4 * 1.21))).epsilon(1e-14));
  // With residual 0 a smaller proposal is always accepted.
  Rng rng(12);
  for (int k = 0; k < 10000; ++k) {
    const double cur = 5.0;  // beyond essentially every K-S draw
    CHECK(ks_scale_mh_step(rng, cur, 0.0, sigma2) < cur);
  }
}

TEST_CASE("sweeps: invariants, determinism, thread independence, online mode") {
  SimConfig cfg = SimConfig::scaled(3, 6, 3, 4);
  cfg.seed = 21;
  const auto [data, truth] = simulate_dataset(cfg);
  const ModelConstants mc = cfg.model_constants();

  auto run = [&](unsigned threads, int sweeps, SweepOptions opts = {}) {
    opts.threads = threads;
    GibbsSampler g(data, mc, opts);
    LatentState s = LatentState::initial(data);
    for (int k = 0; k < sweeps; ++k) {
      g.sweep(s, 99, static_cast<std::uint64_t>(k));
      REQUIRE(check_state_invariants(data, s).empty());
    }
    return s;
  };
  const LatentState a = run(1, 100);
  const LatentState b = run(1, 100);
  const LatentState c = run(3, 100);
  CHECK(a.theta == b.theta);
  CHECK(a.ks_scale == b.ks_scale);
  CHECK(a.drift_precision == b.drift_precision);
  CHECK(a.theta == c.theta);
  CHECK(a.test_effect == c.test_effect);

  SweepOptions online;
  online.mode = Mode::online;
  online.fixed_drift_precision = 1.0 / (0.0612 * 0.0612);
  const LatentState o = run(1, 20, online);
  CHECK(o.drift_precision == 1.0 / (0.0612 * 0.0612));

  SweepOptions missing;
  missing.mode = Mode::online;
  CHECK_THROWS_AS(GibbsSampler(data, mc, missing), ConfigError);

  SweepOptions frozen;
  frozen.frozen_precisions = {true, false, false};
  const LatentState f = run(1, 20, frozen);
  CHECK(f.test_effect_precision[0] == 1.0);
  CHECK(f.day_effect_precision[0] == 1.0);
  CHECK(f.test_effect_precision[1] != 1.0);
}

TEST_CASE("sweep cost is linear in the item count") {
  auto per_sweep = [](std::size_t n) {
    SimConfig cfg = SimConfig::scaled(10, 20, 4, 10);
    cfg.n = n;
    cfg.growth.assign(n, 0.005);
    cfg.day_effect_precision.assign(n, 100.0);
    cfg.test_effect_precision.assign(n, 100.0);
    cfg.seed = 5;
    const auto [data, truth] = simulate_dataset(cfg);
    SweepOptions opts;
    opts.threads = 1;
    GibbsSampler g(data, cfg.model_constants(), opts);
    LatentState s = LatentState::initial(data);
    g.sweep(s, 1, 0);
    double best = 1e300;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int k = 0; k < 3; ++k) g.sweep(s, 1, static_cast<std::uint64_t>(rep * 3 + k + 1));
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  const double t1 = per_sweep(5);
  const double t2 = per_sweep(10);
  const double t4 = per_sweep(20);
  CAPTURE(t1);
  CAPTURE(t2);
  CAPTURE(t4);
  CHECK(t2 / t1 == doctest::Approx(2.0).epsilon(0.5));
  CHECK(t4 / t1 == doctest::Approx(4.0).epsilon(0.5));
}
