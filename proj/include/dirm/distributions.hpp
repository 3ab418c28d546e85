#pragma once

#include "dirm/rng.hpp"

namespace dirm {

enum class Side { positive, negative };

/// Draw from N(mean, variance) restricted to (0, inf) for Side::positive or
/// (-inf, 0] for Side::negative. Inverse CDF when the standardized truncation
/// point is below 4, exponential rejection (Robert 1995) beyond it.
/// Throws ArgumentError when variance <= 0 or an input is not finite.
double sample_truncated_normal(Rng& rng, double mean, double variance, Side side);

/// Standard normal restricted to (lower, inf).
double sample_standard_normal_above(Rng& rng, double lower);

/// Gamma(shape, rate) by Marsaglia–Tsang; mean shape / rate.
/// Throws ArgumentError unless shape > 0 and rate > 0.
double sample_gamma(Rng& rng, double shape, double rate);

/// Kolmogorov–Smirnov density 8 sum_{a>=1} (-1)^{a+1} a^2 nu exp(-2 a^2 nu^2);
/// zero for nu <= 0.
double ks_density(double nu);

/// K–S distribution function 1 - 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2).
double ks_cdf(double x);

/// Draw from the K–S law by numerical inversion of ks_cdf. Always > 0.
double sample_ks(Rng& rng);

/// int_0^inf N(y; 0, 4 nu^2) ks_density(nu) d nu by adaptive quadrature.
/// Equals the standard logistic density e^{-y} / (1 + e^{-y})^2.
double logistic_mixture_density(double y);

/// Upper normal tail Q(x) = P(Z > x).
double normal_upper_tail(double x);

}  // namespace dirm
