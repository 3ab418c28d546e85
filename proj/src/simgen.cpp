#include "dirm/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dirm/error.hpp"
#include "dirm/rng.hpp"

namespace dirm {

namespace {

constexpr int kMaxBernoulliAttempts = 100;

const std::vector<double> kReferenceGrowth{0.0055, 0.0065, 0.0026, 0.0037, 0.0061,
                                       0.0047, 0.0035, 0.0043, 0.0039, 0.0015};
const std::vector<double> kReferenceDelta{2.0408, 1.3333, 1.8182, 1.2346, 1.5873,
                                      1.0,    2.2222, 1.0526, 1.1494, 2.0};
const std::vector<double> kReferenceTau{4.0,    3.1250, 4.3478, 2.7027, 3.7037,
                                    2.8571, 4.0,    2.2222, 9.0909, 4.5455};

double draw_effect(Rng& rng, double precision) {
  if (std::isinf(precision)) return 0.0;
  return rng.normal() / std::sqrt(precision);
}

}  // namespace

SimConfig SimConfig::reference_design() {
  SimConfig cfg;
  cfg.growth = kReferenceGrowth;
  cfg.day_effect_precision = kReferenceDelta;
  cfg.test_effect_precision = kReferenceTau;
  return cfg;
}

SimConfig SimConfig::scaled(std::size_t n, std::size_t T, std::size_t S, std::size_t K) {
  if (n == 0 || n > kReferenceGrowth.size()) {
    throw ConfigError("scaled design supports 1..10 individuals");
  }
  SimConfig cfg = reference_design();
  cfg.n = n;
  cfg.T = T;
  cfg.S = S;
  cfg.K = K;
  cfg.growth.resize(n);
  cfg.day_effect_precision.resize(n);
  cfg.test_effect_precision.resize(n);
  return cfg;
}

std::vector<double> SimConfig::lapse_schedule() const {
  if (!lapses.empty()) return lapses;
  std::vector<double> out(T);
  for (std::size_t t = 1; t <= T; ++t) {
    const double td = static_cast<double>(t);
    out[t - 1] = t <= T / 2 ? 10.0 + td : std::max(1.0, td - 10.0);
  }
  return out;
}

void SimConfig::validate() const {
  if (n < 1 || T < 1 || S < 1 || K < 1) throw ConfigError("simulation counts must be >= 1");
  if (growth.size() != n || day_effect_precision.size() != n || test_effect_precision.size() != n) {
    throw ConfigError("growth, delta and tau vectors need one entry per individual");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(growth[i] >= 0.0)) throw ConfigError("growth rates must be >= 0");
    if (!(day_effect_precision[i] > 0.0) || !(test_effect_precision[i] > 0.0)) {
      throw ConfigError("truth precisions must be > 0");
    }
  }
  if (!(drift_precision > 0.0)) throw ConfigError("drift precision must be > 0");
  if (!lapses.empty() && lapses.size() != T) throw ConfigError("lapse table needs T entries");
  for (double l : lapse_schedule()) {
    if (!(l > 0.0)) throw ConfigError("lapse schedule yields a nonpositive lapse; supply a table");
  }
  if (!groups.empty() && groups.size() != n) throw ConfigError("groups need one entry per individual");
  for (std::size_t g : groups) {
    if (g >= group_prior.size()) throw ConfigError("group without a prior");
  }
  if (!(difficulty_halfwidth >= 0.0)) throw ConfigError("difficulty half-width must be >= 0");
  model_constants().validate();
}

ModelConstants SimConfig::model_constants() const {
  ModelConstants c;
  c.sigma = sigma;
  c.rho = rho;
  c.delta_tmax = delta_tmax;
  c.group_prior = group_prior;
  return c;
}

std::pair<Dataset, SimTruth> simulate_dataset(const SimConfig& cfg) {
  cfg.validate();
  const std::vector<double> lapse = cfg.lapse_schedule();
  const std::size_t n = cfg.n, T = cfg.T, S = cfg.S, K = cfg.K;

  SimTruth truth;
  truth.growth = cfg.growth;
  truth.day_effect_precision = cfg.day_effect_precision;
  truth.test_effect_precision = cfg.test_effect_precision;
  truth.drift_precision = cfg.drift_precision;
  truth.theta.resize(n * (T + 1));
  truth.day_effect.resize(n * T);
  truth.test_effect.resize(n * T * S);
  truth.item_deviation.resize(n * T * S * K);
  std::vector<double> difficulty(n * T * S);

  // Latent layer: abilities, effects, difficulties, item deviations.
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(cfg.seed, i, 0, 2));
    const GroupPrior& prior = cfg.group_prior[cfg.groups.empty() ? 0 : cfg.groups[i]];
    double* theta = truth.theta.data() + i * (T + 1);
    theta[0] = prior.mean + std::sqrt(prior.variance) * rng.normal();
    for (std::size_t t = 1; t <= T; ++t) {
      const double dplus = std::min(lapse[t - 1], cfg.delta_tmax);
      const double noise =
          std::isinf(cfg.drift_precision) ? 0.0 : rng.normal() * std::sqrt(lapse[t - 1] / cfg.drift_precision);
      theta[t] = theta[t - 1] + cfg.growth[i] * (1.0 - cfg.rho * theta[t - 1]) * dplus + noise;
    }
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t day = i * T + t;
      truth.day_effect[day] = draw_effect(rng, cfg.day_effect_precision[i]);
      // iid N(0, 1/tau) centred on their mean is exactly the sum-zero law.
      double mean = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        truth.test_effect[day * S + s] = draw_effect(rng, cfg.test_effect_precision[i]);
        mean += truth.test_effect[day * S + s];
      }
      mean /= static_cast<double>(S);
      for (std::size_t s = 0; s < S; ++s) {
        truth.test_effect[day * S + s] -= mean;
        const double u = rng.uniform();
        difficulty[day * S + s] = theta[t + 1] + cfg.difficulty_halfwidth * (2.0 * u - 1.0);
        for (std::size_t l = 0; l < K; ++l) {
          truth.item_deviation[(day * S + s) * K + l] = cfg.sigma * rng.normal();
        }
      }
    }
  }

  std::vector<LapseRecord> lapse_records;
  std::vector<GroupRecord> group_records;
  for (std::size_t i = 0; i < n; ++i) {
    group_records.push_back({i, cfg.groups.empty() ? 0 : cfg.groups[i]});
    for (std::size_t t = 0; t < T; ++t) lapse_records.push_back({i, t, lapse[t]});
  }

  // Bernoulli layer.
  std::vector<ResponseRecord> responses(n * T * S * K);
  for (int attempt = 0; attempt < kMaxBernoulliAttempts; ++attempt) {
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(derive_seed(cfg.seed, i, static_cast<std::uint64_t>(attempt), 3));
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t day = i * T + t;
        const double theta = truth.theta[i * (T + 1) + t + 1];
        for (std::size_t s = 0; s < S; ++s) {
          const std::size_t test = day * S + s;
          for (std::size_t l = 0; l < K; ++l) {
            const std::size_t item = test * K + l;
            const double x = theta - difficulty[test] + truth.day_effect[day] +
                             truth.test_effect[test] + truth.item_deviation[item];
            const double p = 1.0 / (1.0 + std::exp(-x));
            responses[item] = {i, t, s, l, rng.uniform() < p ? 1 : 0, difficulty[test]};
          }
        }
      }
    }
    Dataset data = Dataset::from_records(responses, lapse_records, group_records);
    if (!cfg.require_valid || validate_dataset(data).passed()) {
      return {std::move(data), std::move(truth)};
    }
  }
  throw ConfigError("simulated dataset failed validation after " +
                    std::to_string(kMaxBernoulliAttempts) + " Bernoulli redraws");
}

}  // namespace dirm
