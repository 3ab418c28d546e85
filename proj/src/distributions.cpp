#include "dirm/distributions.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "dirm/error.hpp"

namespace dirm {

namespace {

constexpr double kTailSwitch = 4.0;
constexpr double kSeriesCutoff = 1e-14;
// Below this point the dual (Jacobi theta) form of the K–S series is used.
constexpr double kDualSeriesBelow = 0.4;
constexpr int kKsKnots = 1024;
constexpr double kKsUpper = 10.0;

// Inverse of the upper normal tail, Q^{-1}(p) for p in (0, 1).
double upper_tail_quantile(double p) {
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

// (lower, inf) for lower >= kTailSwitch: exponential proposal with the
// optimal rate; acceptance probability exceeds 0.9 there.
double exponential_tail(Rng& rng, double lower) {
  const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  for (;;) {
    const double z = lower + rng.exponential(rate);
    const double d = z - rate;
    if (std::log(rng.uniform()) < -0.5 * d * d) return z;
  }
}

// Theta-function form: K(x) = sqrt(2 pi)/x sum exp(-(2k-1)^2 pi^2 / (8 x^2)).
double ks_cdf_dual(double x) {
  const double c = std::numbers::pi * std::numbers::pi / (8.0 * x * x);
  double sum = 0.0;
  for (int k = 1;; ++k) {
    const double m = 2.0 * k - 1.0;
    const double term = std::exp(-m * m * c);
    sum += term;
    if (term < kSeriesCutoff * sum || term == 0.0) break;
  }
  return std::sqrt(2.0 * std::numbers::pi) / x * sum;
}

double ks_density_dual(double x) {
  const double c = std::numbers::pi * std::numbers::pi / 8.0;
  const double x2 = x * x;
  double sum = 0.0;
  for (int k = 1;; ++k) {
    const double m = 2.0 * k - 1.0;
    const double b = m * m * c;
    const double term = std::exp(-b / x2) * (2.0 * b / (x2 * x2) - 1.0 / x2);
    sum += term;
    if (std::abs(term) < kSeriesCutoff * std::abs(sum) || term == 0.0) break;
  }
  return std::sqrt(2.0 * std::numbers::pi) * sum;
}

struct KsTable {
  std::array<double, kKsKnots + 1> knots{};
  std::array<double, kKsKnots + 1> cdf{};

  KsTable() {
    knots[0] = 0.0;
    cdf[0] = 0.0;
    knots[kKsKnots] = kKsUpper;
    cdf[kKsKnots] = 1.0;
    for (int j = 1; j < kKsKnots; ++j) {
      const double target = static_cast<double>(j) / kKsKnots;
      double lo = knots[j - 1];
      double hi = kKsUpper;
      while (hi - lo > 1e-15) {
        const double mid = 0.5 * (lo + hi);
        if (ks_cdf(mid) < target) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      knots[j] = 0.5 * (lo + hi);
      cdf[j] = ks_cdf(knots[j]);
    }
  }
};

const KsTable& ks_table() {
  static const KsTable table;
  return table;
}

}  // namespace

double normal_upper_tail(double x) {
  return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

double sample_standard_normal_above(Rng& rng, double lower) {
  if (lower >= kTailSwitch) return exponential_tail(rng, lower);
  const double u = rng.uniform();
  if (lower >= 0.0) return upper_tail_quantile(normal_upper_tail(lower) * u);
  // z > lower with lower < 0: draw the upper-tail probability p of z
  // uniformly on (0, P(Z > lower)); use the complement when p > 1/2.
  const double q = normal_upper_tail(-lower);  // P(Z < lower)
  const double p = u * (1.0 - q);
  if (p <= 0.5) return upper_tail_quantile(p);
  const double complement = (1.0 - u) + u * q;  // 1 - p
  return -upper_tail_quantile(complement);
}

double sample_truncated_normal(Rng& rng, double mean, double variance, Side side) {
  if (!(variance > 0.0) || !std::isfinite(variance) || !std::isfinite(mean)) {
    throw ArgumentError("sample_truncated_normal: need finite mean and variance > 0");
  }
  const double sd = std::sqrt(variance);
  if (side == Side::positive) {
    const double y = mean + sd * sample_standard_normal_above(rng, -mean / sd);
    return y > 0.0 ? y : std::numeric_limits<double>::min();
  }
  const double y = mean - sd * sample_standard_normal_above(rng, mean / sd);
  return y <= 0.0 ? y : 0.0;
}

double sample_gamma(Rng& rng, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    throw ArgumentError("sample_gamma: need shape > 0 and rate > 0 (got shape=" +
                        std::to_string(shape) + ", rate=" + std::to_string(rate) + ")");
  }
  double boost = 1.0;
  double a = shape;
  if (a < 1.0) {
    boost = std::pow(rng.uniform(), 1.0 / a);
    a += 1.0;
  }
  const double d = a - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x ||
        std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return boost * d * v / rate;
    }
  }
}

double ks_density(double nu) {
  if (!(nu > 0.0)) return 0.0;
  if (nu < kDualSeriesBelow) return ks_density_dual(nu);
  double sum = 0.0;
  for (int a = 1;; ++a) {
    const double a2 = static_cast<double>(a) * a;
    const double term = a2 * nu * std::exp(-2.0 * a2 * nu * nu);
    sum += (a % 2 == 1) ? term : -term;
    if (term < kSeriesCutoff) break;
  }
  return 8.0 * sum;
}

double ks_cdf(double x) {
  if (!(x > 0.0)) return 0.0;
  if (x < kDualSeriesBelow) return ks_cdf_dual(x);
  double sum = 0.0;
  for (int k = 1;; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 == 1) ? term : -term;
    if (term < kSeriesCutoff) break;
  }
  return 1.0 - 2.0 * sum;
}

double sample_ks(Rng& rng) {
  const KsTable& table = ks_table();
  const double u = rng.uniform();
  const int j = static_cast<int>(u * kKsKnots);
  double lo = table.knots[j];
  double hi = table.knots[j + 1];
  double f_lo = table.cdf[j] - u;
  double f_hi = table.cdf[j + 1] - u;
  double x = lo + (hi - lo) * (-f_lo) / (f_hi - f_lo);
  for (int iter = 0; iter < 200; ++iter) {
    const double f = ks_cdf(x) - u;
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double slope = ks_density(x);
    double next = slope > 0.0 ? x - f / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - x);
    x = next;
    if (step < 1e-10 || hi - lo < 1e-10) break;
  }
  return x > 0.0 ? x : table.knots[1] * 1e-3;
}

double logistic_mixture_density(double y) {
  auto integrand = [y](double nu) {
    if (!(nu > 0.0)) return 0.0;
    const double sd = 2.0 * nu;
    const double z = y / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi)) *
           ks_density(nu);
  };
  double error = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-13, &error);
}

}  // namespace dirm
