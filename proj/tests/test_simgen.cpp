#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "dirm/error.hpp"
#include "dirm/simgen.hpp"
#include "test_support.hpp"

using namespace dirm;
using dirm::testing::Moments;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("reference design defaults") {
  const SimConfig cfg = SimConfig::reference_design();
  CHECK(cfg.n == 10);
  CHECK(cfg.T == 50);
  CHECK(cfg.S == 4);
  CHECK(cfg.K == 10);
  CHECK(cfg.sigma == 0.7333);
  CHECK(cfg.rho == 0.1180);
  CHECK(cfg.drift_precision == doctest::Approx(1.0 / (0.0218 * 0.0218)));
  const std::vector<double> c = {0.0055, 0.0065, 0.0026, 0.0037, 0.0061,
                                 0.0047, 0.0035, 0.0043, 0.0039, 0.0015};
  CHECK(cfg.growth == c);
  const auto lapse = cfg.lapse_schedule();
  CHECK(lapse.size() == 50);
  CHECK(lapse[0] == 11.0);
  CHECK(lapse[24] == 35.0);  // t = 25
  CHECK(lapse[25] == 16.0);  // t = 26
  CHECK(lapse[49] == 40.0);
}

TEST_CASE("reference dataset is valid with a near-balanced success rate") {
  SimConfig cfg = SimConfig::reference_design();
  cfg.seed = 7;
  const auto [data, truth] = simulate_dataset(cfg);
  CHECK(data.num_individuals() == 10);
  CHECK(data.num_items_total() == 20000);
  CHECK(validate_dataset(data).passed());
  double correct = 0.0;
  for (std::size_t l = 0; l < data.num_items_total(); ++l) correct += data.response(l);
  const double rate = correct / static_cast<double>(data.num_items_total());
  CHECK(rate > 0.35);
  CHECK(rate < 0.65);
  CHECK(truth.theta.size() == 10 * 51);
  for (std::size_t d = 0; d < data.num_days_total(); ++d) {
    double sum = 0.0;
    const IndexRange tr = data.tests(d);
    for (std::size_t s = tr.begin; s < tr.end; ++s) sum += truth.test_effect[s];
    CHECK(std::abs(sum) < 1e-12);
  }
}

TEST_CASE("same seed, same output; different seed, different output") {
  SimConfig cfg = SimConfig::scaled(3, 8, 2, 3);
  cfg.seed = 11;
  const auto a = simulate_dataset(cfg);
  const auto b = simulate_dataset(cfg);
  CHECK(a.first.checksum() == b.first.checksum());
  CHECK(a.second.theta == b.second.theta);
  cfg.seed = 12;
  CHECK(simulate_dataset(cfg).first.checksum() != a.first.checksum());
}

TEST_CASE("degenerate dynamics: constant paths and symmetric noise") {
  SimConfig cfg = SimConfig::scaled(2, 40, 4, 25);
  cfg.growth.assign(2, 0.0);
  cfg.drift_precision = kInf;
  cfg.day_effect_precision.assign(2, kInf);
  cfg.test_effect_precision.assign(2, kInf);
  cfg.require_valid = false;
  cfg.seed = 3;
  const auto [data, truth] = simulate_dataset(cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t t = 1; t <= 40; ++t) CHECK(truth.theta[i * 41 + t] == truth.theta[i * 41]);
  }
  for (double e : truth.day_effect) CHECK(e == 0.0);
  for (double e : truth.test_effect) CHECK(e == 0.0);
  // P(X = 1) = E logistic(-zeta - eps) = 1/2 by symmetry.
  Moments m;
  for (std::size_t l = 0; l < data.num_items_total(); ++l) m.add(data.response(l));
  CHECK(std::abs(m.mean() - 0.5) < 4.0 * 0.5 / std::sqrt(static_cast<double>(m.count())));
}

TEST_CASE("effect laws: day effects N(0, 1/delta), sum-zero test effects") {
  SimConfig cfg = SimConfig::scaled(1, 4000, 4, 1);
  cfg.day_effect_precision = {2.0};
  cfg.test_effect_precision = {4.0};
  cfg.require_valid = false;
  cfg.lapses.assign(4000, 1.0);
  cfg.seed = 17;
  const auto [data, truth] = simulate_dataset(cfg);
  Moments day, test;
  for (double e : truth.day_effect) day.add(e);
  for (double e : truth.test_effect) test.add(e);
  CHECK(day.variance() == doctest::Approx(0.5).epsilon(0.06));
  // Marginal variance of one coordinate under the sum-zero law: (S-1)/(S tau).
  CHECK(test.variance() == doctest::Approx(3.0 / 16.0).epsilon(0.05));
}

TEST_CASE("difficulties track ability within the half-width") {
  SimConfig cfg = SimConfig::scaled(2, 10, 3, 2);
  cfg.seed = 5;
  const auto [data, truth] = simulate_dataset(cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    const IndexRange dr = data.days(i);
    for (std::size_t d = dr.begin; d < dr.end; ++d) {
      const double theta = truth.theta[data.theta_begin(i) + (d - dr.begin) + 1];
      const IndexRange tr = data.tests(d);
      for (std::size_t s = tr.begin; s < tr.end; ++s) {
        CHECK(std::abs(data.difficulty(s) - theta) <= 0.1);
      }
    }
  }
}

TEST_CASE("configuration errors") {
  SimConfig cfg = SimConfig::reference_design();
  cfg.growth.pop_back();
  CHECK_THROWS_AS(simulate_dataset(cfg), ConfigError);
  cfg = SimConfig::reference_design();
  cfg.K = 0;
  CHECK_THROWS_AS(simulate_dataset(cfg), ConfigError);
  cfg = SimConfig::reference_design();
  cfg.day_effect_precision[0] = -1.0;
  CHECK_THROWS_AS(simulate_dataset(cfg), ConfigError);
  CHECK_THROWS_AS(SimConfig::scaled(11, 5, 2, 2), ConfigError);
  // A single individual can never pass the gate.
  cfg = SimConfig::scaled(1, 5, 2, 2);
  CHECK_THROWS_AS(simulate_dataset(cfg), ConfigError);
}
