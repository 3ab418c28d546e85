#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "dirm/error.hpp"
#include "dirm/ffbs.hpp"
#include "oracles.hpp"

using namespace dirm;
using dirm::testing::dense_path_posterior;

namespace {

struct Instance {
  std::vector<double> lapse;
  std::vector<double> lapse_plus;
  std::vector<DayObservations> days;
  PathModel model;
};

Instance three_day_instance() {
  Instance in;
  in.lapse = {3.0, 20.0, 7.0};
  for (double l : in.lapse) in.lapse_plus.push_back(std::min(l, 14.0));
  // Two items per day with psi 1/(4 nu^2 + sigma^2) for assorted nu.
  in.days = {{0.9, 0.9 * -7.5}, {0.6, 0.6 * -8.9}, {1.4, 1.4 * -6.1}};
  in.model.initial_mean = 0.3;
  in.model.initial_variance = 1.0;
  in.model.growth = 0.04;
  in.model.drift_precision = 2.0;
  in.model.rho = 0.118;
  in.model.lapse = in.lapse;
  in.model.lapse_plus = in.lapse_plus;
  return in;
}

}  // namespace

TEST_CASE("conjugate hand instance") {
  const std::vector<double> lapse{1.0};
  const std::vector<DayObservations> days{{1.0, 2.0}};
  PathModel m;
  m.initial_mean = 0.0;
  m.initial_variance = 1.0;
  m.growth = 0.0;
  m.drift_precision = 1.0;
  m.rho = 0.118;
  m.lapse = lapse;
  m.lapse_plus = lapse;
  const FilterState f = forward_filter(m, days);
  const double lambda0 = -1.0 / 0.118;
  CHECK(f.prior_mean[1] == doctest::Approx(lambda0).epsilon(1e-15));
  CHECK(f.prior_var[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(f.post_var[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(f.post_mean[1] == doctest::Approx((2.0 / 3.0) * (lambda0 / 2.0 + 2.0)).epsilon(1e-14));
}

TEST_CASE("filter and backward moments agree with the dense posterior") {
  Instance in = three_day_instance();
  const auto law = dense_path_posterior(in.model, in.days);
  FilterState f = forward_filter(in.model, in.days);
  const double inv_rho = 1.0 / in.model.rho;
  // The last filtered marginal is the smoothed marginal.
  CHECK(f.post_mean[3] + inv_rho == doctest::Approx(law.mean[3]).epsilon(1e-12));
  CHECK(f.post_var[3] == doctest::Approx(law.cov(3, 3)).epsilon(1e-12));

  Rng rng(1);
  std::vector<double> theta(4);
  backward_sample(rng, f, in.model, theta);
  for (double v : theta) CHECK(std::isfinite(v));
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(f.backward_var[t] > 0.0);
    CHECK(f.backward_var[t] <= f.post_var[t]);
  }
}

TEST_CASE("backward samples match dense-Gaussian moments") {
  Instance in = three_day_instance();
  const auto law = dense_path_posterior(in.model, in.days);
  FilterState f = forward_filter(in.model, in.days);
  Rng rng(99);
  const int n = 100000;
  Eigen::MatrixXd draws(n, 4);
  std::vector<double> theta(4);
  for (int k = 0; k < n; ++k) {
    backward_sample(rng, f, in.model, theta);
    for (int j = 0; j < 4; ++j) draws(k, j) = theta[j];
  }
  const Eigen::VectorXd mean = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / (n - 1.0);
  for (int j = 0; j < 4; ++j) {
    CAPTURE(j);
    CHECK(std::abs(mean[j] - law.mean[j]) < 3.0 * std::sqrt(law.cov(j, j) / n));
    for (int k = 0; k < 4; ++k) {
      const double se = std::sqrt((law.cov(j, j) * law.cov(k, k) + law.cov(j, k) * law.cov(j, k)) / n);
      CAPTURE(k);
      CHECK(std::abs(cov(j, k) - law.cov(j, k)) < 5.0 * se);
    }
  }
}

TEST_CASE("fixed seed gives identical paths") {
  Instance in = three_day_instance();
  FilterState f = forward_filter(in.model, in.days);
  std::vector<double> a(4), b(4);
  Rng r1(5), r2(5);
  backward_sample(r1, f, in.model, a);
  backward_sample(r2, f, in.model, b);
  CHECK(a == b);
}

TEST_CASE("degenerate inputs raise numeric errors with context") {
  Instance in = three_day_instance();
  in.days[1].psi_z_sum = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward_filter(in.model, in.days), NumericError);
  Instance z = three_day_instance();
  z.model.initial_variance = 0.0;
  z.model.individual = 4;
  try {
    forward_filter(z.model, z.days);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("individual 5") != std::string::npos);
  }
}
