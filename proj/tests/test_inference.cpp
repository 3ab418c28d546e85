#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <vector>

#include "dirm/error.hpp"
#include "dirm/inference.hpp"
#include "dirm/simgen.hpp"
#include "test_support.hpp"

using namespace dirm;
using dirm::testing::balanced_dataset;
using dirm::testing::truncate_days;

namespace {

SamplerConfig short_config(std::uint64_t seed = 3) {
  SamplerConfig c;
  c.n_iterations = 300;
  c.burn_in = 100;
  c.thin = 2;
  c.seed = seed;
  c.threads = 1;
  return c;
}

}  // namespace

TEST_CASE("type-7 quantiles") {
  std::vector<double> x(100);
  std::iota(x.begin(), x.end(), 1.0);
  const double probs[] = {0.0, 0.5, 1.0, 0.25};
  const auto q = summarize(x, probs);
  CHECK(q[0] == 1.0);
  CHECK(q[1] == 50.5);
  CHECK(q[2] == 100.0);
  CHECK(q[3] == doctest::Approx(25.75));
  const double single[] = {0.3};
  CHECK(summarize(std::vector<double>{4.0}, single)[0] == 4.0);
  CHECK_THROWS_AS(summarize(std::vector<double>{}, single), ArgumentError);
  const double bad[] = {1.5};
  CHECK_THROWS_AS(summarize(x, bad), ArgumentError);
}

TEST_CASE("coverage arithmetic") {
  // Ten individuals with 100 scored days each.
  const int covered[] = {100, 100, 99, 99, 100, 100, 94, 100, 100, 91};
  std::vector<SummaryRow> summary;
  std::vector<TruthRow> truth;
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t t = 0; t <= 100; ++t) {
      const SeriesKey key{Quantity::theta, i, t};
      summary.push_back({key, -1.0, 0.0, 1.0});
      // theta_0 is outside its interval but not scored.
      const bool inside = t >= 1 && static_cast<int>(t) <= covered[i];
      truth.push_back({key, inside ? 0.5 : 2.0});
    }
    summary.push_back({{Quantity::growth, i, {}}, 0.0, 0.005, 0.01});
    truth.push_back({{Quantity::growth, i, {}}, i == 3 ? 0.02 : 0.004});
  }
  summary.push_back({{Quantity::drift_sd, {}, {}}, 0.01, 0.02, 0.03});
  truth.push_back({{Quantity::drift_sd, {}, {}}, 0.0218});
  const CoverageReport r = coverage(summary, truth);
  CHECK(r.theta_points == 1000);
  CHECK(r.theta_overall == doctest::Approx(0.983));
  CHECK(r.theta_per_individual[6] == doctest::Approx(0.94));
  CHECK(r.parameters_total == 11);
  CHECK(r.parameters_covered == 10);
  REQUIRE(r.drift_sd_covered.has_value());
  CHECK(*r.drift_sd_covered);

  truth.push_back({{Quantity::theta, 10, 1}, 0.0});
  CHECK_THROWS_AS(coverage(summary, truth), ArgumentError);
}

TEST_CASE("raw-score estimate") {
  // 10 logistic(theta + 1) + 10 logistic(theta - 1) = 14.
  const TestScore tests[] = {{-1.0, 10, 7}, {1.0, 10, 7}};
  const RawScoreEstimate e = raw_score_estimate(tests);
  CHECK_FALSE(e.saturated);
  auto f = [](double th) {
    return 10.0 / (1.0 + std::exp(-(th + 1.0))) + 10.0 / (1.0 + std::exp(-(th - 1.0))) - 14.0;
  };
  // Grid scan for the sign change.
  double root = 0.0;
  for (double th = -5.0; th < 5.0; th += 1e-5) {
    if (f(th) < 0.0 && f(th + 1e-5) >= 0.0) root = th + 0.5e-5;
  }
  CHECK(std::abs(e.theta - root) < 1e-5);
  CHECK(std::abs(f(e.theta)) < 1e-8);

  const TestScore all[] = {{0.2, 5, 5}, {0.5, 5, 5}};
  const RawScoreEstimate s = raw_score_estimate(all);
  CHECK(s.saturated);
  CHECK(s.theta == doctest::Approx(6.5));
  const TestScore none[] = {{0.2, 5, 0}, {0.5, 5, 0}};
  CHECK(raw_score_estimate(none).theta == doctest::Approx(-5.8));
  CHECK_THROWS_AS(raw_score_estimate(std::span<const TestScore>{}), ArgumentError);

  const Dataset d = balanced_dataset(2, 3, 2, 4, 0.3);
  const auto grid = raw_score_estimates(d);
  REQUIRE(grid.size() == 2);
  CHECK(grid[0].size() == 3);
  // Half correct on equal difficulties: theta = a.
  CHECK(grid[1][2].theta == doctest::Approx(0.3).epsilon(1e-8));
}

TEST_CASE("sampler configuration") {
  SamplerConfig c;
  CHECK(c.n_iterations == 50000);
  CHECK(c.burn_in == 30000);
  CHECK(c.thin == 10);
  CHECK(c.num_draws() == 2000);
  CHECK_NOTHROW(c.validate());
  c.burn_in = 50000;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SamplerConfig{};
  c.thin = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SamplerConfig{};
  c.mode = Mode::online;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.fixed_drift_sd = 0.0612;
  CHECK_NOTHROW(c.validate());
  c.fixed_drift_sd = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("quantity names round-trip") {
  for (Quantity q : {Quantity::theta, Quantity::growth, Quantity::drift_sd,
                     Quantity::day_effect_sd, Quantity::test_effect_sd}) {
    CHECK(quantity_from_name(quantity_name(q)) == q);
  }
  CHECK_THROWS_AS(quantity_from_name("lambda"), ArgumentError);
}

TEST_CASE("fit: keys, thinning, determinism and the validation gate") {
  SimConfig sim = SimConfig::scaled(2, 6, 2, 4);
  sim.seed = 4;
  const auto [data, truth] = simulate_dataset(sim);
  const ModelConstants mc = sim.model_constants();
  const SamplerConfig cfg = short_config();
  const ChainOutput a = fit(data, mc, cfg);
  CHECK(a.keys.size() == 2 * 7 + 2 * 3 + 1);
  CHECK(a.num_draws == 100);
  CHECK(a.iterations.front() == 102);
  CHECK(a.iterations.back() == 300);
  CHECK(a.summaries.size() == a.keys.size());
  for (const auto& row : a.summaries) {
    CHECK(row.q025 <= row.median);
    CHECK(row.median <= row.q975);
  }
  const ChainOutput b = fit(data, mc, cfg);
  CHECK(a.draws == b.draws);

  const auto chains = fit_chains(data, mc, cfg, 2);
  CHECK(chains[0].draws == a.draws);
  CHECK(chains[1].draws != a.draws);
  const auto pooled = pool_summaries(chains);
  CHECK(pooled.size() == a.keys.size());

  const Dataset one = balanced_dataset(1, 4, 2, 2);
  try {
    fit(one, ModelConstants{}, cfg);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()) == clause::kMinIndividuals);
  }
}

TEST_CASE("online estimates are prefix-deterministic") {
  SimConfig sim = SimConfig::scaled(2, 5, 2, 3);
  sim.seed = 8;
  const auto [data, truth] = simulate_dataset(sim);
  SamplerConfig cfg = short_config(12);
  cfg.mode = Mode::online;
  cfg.fixed_drift_sd = kDefaultOnlineDriftSd;
  const OnlineResult full = fit_online(data, sim.model_constants(), cfg);
  REQUIRE(full.trajectories.size() == 2);
  CHECK(full.trajectories[0].size() == 5);
  CHECK(full.trajectories[0][0].relaxed);  // one day cannot pass the gate
  const OnlineResult part = fit_online(truncate_days(data, 3), sim.model_constants(), cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    REQUIRE(part.trajectories[i].size() == 3);
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(part.trajectories[i][t].day == t + 1);
      CHECK(part.trajectories[i][t].median == full.trajectories[i][t].median);
      CHECK(part.trajectories[i][t].q025 == full.trajectories[i][t].q025);
      CHECK(part.trajectories[i][t].q975 == full.trajectories[i][t].q975);
    }
  }
  SamplerConfig no_sd = cfg;
  no_sd.fixed_drift_sd.reset();
  CHECK_THROWS_AS(fit_online(data, sim.model_constants(), no_sd), ConfigError);
}

TEST_CASE("truth rows follow the fit keys") {
  SimConfig sim = SimConfig::scaled(2, 4, 2, 2);
  const auto [data, truth] = simulate_dataset(sim);
  const auto rows = truth_rows(data, truth);
  const auto keys = fit_keys(data);
  REQUIRE(rows.size() == keys.size());
  for (std::size_t k = 0; k < keys.size(); ++k) CHECK(rows[k].key == keys[k]);
  CHECK(rows.back().value == doctest::Approx(0.0218));
}
