#include "dirm/ffbs.hpp"

#include <cmath>
#include <string>

#include "dirm/error.hpp"

namespace dirm {

namespace {

constexpr double kVarianceFloor = 1e-300;

void check_variance(double v, const char* what, const PathModel& model, std::size_t t) {
  if (!(v >= kVarianceFloor) || !std::isfinite(v)) {
    throw NumericError(std::string("ffbs: ") + what + " out of range (" + std::to_string(v) +
                       ") at individual " + std::to_string(model.individual + 1) + ", day " +
                       std::to_string(t));
  }
}

void check_mean(double m, const char* what, const PathModel& model, std::size_t t) {
  if (!std::isfinite(m)) {
    throw NumericError(std::string("ffbs: non-finite ") + what + " at individual " +
                       std::to_string(model.individual + 1) + ", day " + std::to_string(t));
  }
}

}  // namespace

FilterState forward_filter(const PathModel& model, std::span<const DayObservations> days) {
  FilterState filter;
  forward_filter(model, days, filter);
  return filter;
}

void forward_filter(const PathModel& model, std::span<const DayObservations> days,
                    FilterState& f) {
  const std::size_t T = days.size();
  f.transition.assign(T + 1, 1.0);
  f.prior_mean.resize(T + 1);
  f.prior_var.resize(T + 1);
  f.post_mean.resize(T + 1);
  f.post_var.resize(T + 1);
  f.backward_mean.assign(T + 1, 0.0);
  f.backward_var.assign(T + 1, 0.0);

  const double inv_rho = 1.0 / model.rho;
  const double inv_phi = 1.0 / model.drift_precision;
  f.prior_mean[0] = f.post_mean[0] = model.initial_mean - inv_rho;
  f.prior_var[0] = f.post_var[0] = model.initial_variance;
  check_variance(f.post_var[0], "initial variance", model, 0);

  for (std::size_t t = 1; t <= T; ++t) {
    const double g = 1.0 - model.growth * model.rho * model.lapse_plus[t - 1];
    const double d = g * f.post_mean[t - 1];
    const double R = g * g * f.post_var[t - 1] + inv_phi * model.lapse[t - 1];
    check_variance(R, "prior variance R", model, t);
    const double precision = days[t - 1].psi_sum + 1.0 / R;
    const double V = 1.0 / precision;
    check_variance(V, "posterior variance V", model, t);
    const double mu = V * (d / R + days[t - 1].psi_z_sum);
    check_mean(mu, "posterior mean", model, t);
    f.transition[t] = g;
    f.prior_mean[t] = d;
    f.prior_var[t] = R;
    f.post_mean[t] = mu;
    f.post_var[t] = V;
  }
}

void backward_sample(Rng& rng, FilterState& f, const PathModel& model,
                     std::span<double> theta) {
  const std::size_t T = f.num_days();
  const double inv_rho = 1.0 / model.rho;
  const double phi = model.drift_precision;

  double lambda_next = f.post_mean[T] + std::sqrt(f.post_var[T]) * rng.normal();
  f.backward_mean[T] = f.post_mean[T];
  f.backward_var[T] = f.post_var[T];
  theta[T] = lambda_next + inv_rho;
  for (std::size_t t = T; t-- > 0;) {
    const double g = f.transition[t + 1];
    const double w = phi / model.lapse[t];  // precision of w_{t+1}
    const double H = 1.0 / (w * g * g + 1.0 / f.post_var[t]);
    check_variance(H, "backward variance H", model, t);
    const double h = H * (f.post_mean[t] / f.post_var[t] + w * g * lambda_next);
    check_mean(h, "backward mean", model, t);
    f.backward_mean[t] = h;
    f.backward_var[t] = H;
    lambda_next = h + std::sqrt(H) * rng.normal();
    theta[t] = lambda_next + inv_rho;
  }
}

}  // namespace dirm
