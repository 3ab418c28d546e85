#include "dirm/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include <oneapi/tbb/parallel_for.h>
#include <oneapi/tbb/task_arena.h>

#include "dirm/error.hpp"

namespace dirm {

namespace {

constexpr double kRawScoreClamp = 6.0;
constexpr double kRawScoreBracket = 50.0;
constexpr double kOnlineBurnInFraction = 0.2;

double key_value(const Dataset& data, const LatentState& state, const SeriesKey& key) {
  switch (key.quantity) {
    case Quantity::theta:
      return state.theta[data.theta_begin(*key.individual) + *key.day];
    case Quantity::growth:
      return state.growth[*key.individual];
    case Quantity::drift_sd:
      return 1.0 / std::sqrt(state.drift_precision);
    case Quantity::day_effect_sd:
      return 1.0 / std::sqrt(state.day_effect_precision[*key.individual]);
    case Quantity::test_effect_sd:
      return 1.0 / std::sqrt(state.test_effect_precision[*key.individual]);
  }
  return 0.0;
}

unsigned resolve_threads(unsigned requested) {
  const unsigned hardware = std::max(1u, std::thread::hardware_concurrency());
  return requested != 0 ? std::min(requested, hardware) : hardware;
}

// State for prefix t+1 from the final state of prefix t: copy every shared
// entry, start the new day at the last ability with zero effects.
LatentState extend_state(const LatentState& previous, const Dataset& next) {
  LatentState s = LatentState::initial(next);
  std::copy(previous.theta.begin(), previous.theta.end(), s.theta.begin());
  s.theta.back() = previous.theta.back();
  s.growth = previous.growth;
  s.drift_precision = previous.drift_precision;
  std::copy(previous.day_effect.begin(), previous.day_effect.end(), s.day_effect.begin());
  s.day_effect_precision = previous.day_effect_precision;
  std::copy(previous.test_effect.begin(), previous.test_effect.end(), s.test_effect.begin());
  s.test_effect_precision = previous.test_effect_precision;
  std::copy(previous.latent_utility.begin(), previous.latent_utility.end(),
            s.latent_utility.begin());
  std::copy(previous.ks_scale.begin(), previous.ks_scale.end(), s.ks_scale.begin());
  return s;
}

}  // namespace

void SamplerConfig::validate() const {
  if (thin < 1) throw ConfigError("thin must be >= 1");
  if (burn_in >= n_iterations) throw ConfigError("burn_in must be < n_iterations");
  if (num_draws() == 0) throw ConfigError("no draws are kept: n_iterations - burn_in < thin");
  if (mode == Mode::online && !fixed_drift_sd) {
    throw ConfigError("online mode requires a fixed drift sd");
  }
  if (fixed_drift_sd && !(*fixed_drift_sd > 0.0 && std::isfinite(*fixed_drift_sd))) {
    throw ConfigError("drift sd must be > 0");
  }
}

const char* quantity_name(Quantity q) noexcept {
  switch (q) {
    case Quantity::theta: return "theta";
    case Quantity::growth: return "growth";
    case Quantity::drift_sd: return "drift_sd";
    case Quantity::day_effect_sd: return "day_effect_sd";
    case Quantity::test_effect_sd: return "test_effect_sd";
  }
  return "";
}

Quantity quantity_from_name(const std::string& name) {
  for (Quantity q : {Quantity::theta, Quantity::growth, Quantity::drift_sd,
                     Quantity::day_effect_sd, Quantity::test_effect_sd}) {
    if (name == quantity_name(q)) return q;
  }
  throw ArgumentError("unknown quantity '" + name + "'");
}

std::vector<double> summarize(std::span<const double> draws, std::span<const double> probabilities) {
  if (draws.empty()) throw ArgumentError("summarize: no draws");
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(probabilities.size());
  for (double p : probabilities) {
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("summarize: probability outside [0, 1]");
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    out.push_back(sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]));
  }
  return out;
}

SummaryRow summarize_series(const SeriesKey& key, std::span<const double> draws) {
  static constexpr double kProbs[] = {0.025, 0.5, 0.975};
  const auto q = summarize(draws, kProbs);
  return {key, q[0], q[1], q[2]};
}

const SummaryRow* ChainOutput::find(const SeriesKey& key) const {
  auto it = std::find_if(summaries.begin(), summaries.end(),
                         [&](const SummaryRow& r) { return r.key == key; });
  return it == summaries.end() ? nullptr : &*it;
}

std::vector<SeriesKey> fit_keys(const Dataset& data) {
  std::vector<SeriesKey> keys;
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    for (std::size_t t = 0; t <= data.num_days(i); ++t) keys.push_back({Quantity::theta, i, t});
  }
  for (std::size_t i = 0; i < data.num_individuals(); ++i) keys.push_back({Quantity::growth, i, {}});
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    keys.push_back({Quantity::day_effect_sd, i, {}});
  }
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    keys.push_back({Quantity::test_effect_sd, i, {}});
  }
  keys.push_back({Quantity::drift_sd, {}, {}});
  return keys;
}

ChainOutput run_chain(const ChainRequest& request) {
  const Dataset& data = *request.data;
  const SamplerConfig& config = request.config;
  config.validate();

  SweepOptions options;
  options.mode = config.mode;
  if (config.fixed_drift_sd) {
    options.fixed_drift_precision = 1.0 / (*config.fixed_drift_sd * *config.fixed_drift_sd);
  }
  options.frozen_precisions = request.frozen_precisions;
  options.threads = config.threads;
  GibbsSampler sampler(data, *request.constants, options);

  LatentState state = request.initial ? *request.initial : LatentState::initial(data);
  for (std::size_t i = 0; i < sampler.options().frozen_precisions.size(); ++i) {
    if (sampler.options().frozen_precisions[i]) {
      state.test_effect_precision[i] = 1.0;
      state.day_effect_precision[i] = 1.0;
    }
  }
  if (options.fixed_drift_precision) state.drift_precision = *options.fixed_drift_precision;

  ChainOutput out;
  out.keys = request.keys.empty() ? fit_keys(data) : request.keys;
  out.num_draws = config.num_draws();
  out.draws.assign(out.keys.size() * out.num_draws, 0.0);
  out.iterations.reserve(out.num_draws);
  out.n_iterations = config.n_iterations;
  out.burn_in = config.burn_in;
  out.thin = config.thin;
  out.seed = config.seed;

  const auto start = std::chrono::steady_clock::now();
  std::size_t kept = 0;
  for (std::size_t k = 0; k < config.n_iterations; ++k) {
    sampler.sweep(state, config.seed, k);
    if (k < config.burn_in || (k - config.burn_in + 1) % config.thin != 0) continue;
    if (kept == out.num_draws) break;
    for (std::size_t key = 0; key < out.keys.size(); ++key) {
      out.draws[key * out.num_draws + kept] = key_value(data, state, out.keys[key]);
    }
    out.iterations.push_back(k + 1);
    ++kept;
  }
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.summaries.reserve(out.keys.size());
  for (std::size_t key = 0; key < out.keys.size(); ++key) {
    out.summaries.push_back(summarize_series(out.keys[key], out.series(key)));
  }
  out.final_state = std::move(state);
  return out;
}

ChainOutput fit(const Dataset& data, const ModelConstants& constants, const SamplerConfig& config) {
  config.validate();
  constants.validate();
  constants.check_groups(data);
  const ValidationReport report = validate_dataset(data);
  if (!report.passed()) throw ValidationError(report.first_clause());
  ChainRequest request;
  request.data = &data;
  request.constants = &constants;
  request.config = config;
  return run_chain(request);
}

std::vector<ChainOutput> fit_chains(const Dataset& data, const ModelConstants& constants,
                                    const SamplerConfig& config, std::size_t chains) {
  if (chains == 0) throw ConfigError("chains must be >= 1");
  config.validate();
  std::vector<ChainOutput> out(chains);
  const unsigned threads = resolve_threads(config.threads);
  // Threads go to chains first; leftover parallelism goes inside each chain.
  const unsigned outer = static_cast<unsigned>(std::min<std::size_t>(threads, chains));
  SamplerConfig base = config;
  base.threads = std::max(1u, threads / outer);
  oneapi::tbb::task_arena arena(static_cast<int>(outer));
  arena.execute([&] {
    oneapi::tbb::parallel_for(std::size_t{0}, chains, [&](std::size_t c) {
      SamplerConfig cfg = base;
      cfg.seed = c == 0 ? config.seed : derive_seed(config.seed, c, 0, 5);
      out[c] = fit(data, constants, cfg);
    });
  });
  return out;
}

std::vector<SummaryRow> pool_summaries(std::span<const ChainOutput> chains) {
  if (chains.empty()) throw ArgumentError("pool_summaries: no chains");
  std::vector<SummaryRow> out;
  const auto& keys = chains.front().keys;
  std::vector<double> pooled;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    pooled.clear();
    for (const auto& c : chains) {
      if (c.keys != keys) throw ArgumentError("pool_summaries: chains have different keys");
      const auto s = c.series(k);
      pooled.insert(pooled.end(), s.begin(), s.end());
    }
    out.push_back(summarize_series(keys[k], pooled));
  }
  return out;
}

CoverageReport coverage(std::span<const SummaryRow> summary, std::span<const TruthRow> truth) {
  std::map<SeriesKey, const SummaryRow*> by_key;
  for (const auto& row : summary) by_key[row.key] = &row;
  auto inside = [](const SummaryRow& s, double v) { return s.q025 <= v && v <= s.q975; };

  CoverageReport report;
  std::vector<std::size_t> hits;
  std::vector<std::size_t> points;
  for (const auto& t : truth) {
    auto it = by_key.find(t.key);
    if (t.key.quantity == Quantity::theta) {
      if (!t.key.individual || !t.key.day) throw ArgumentError("coverage: theta row without index");
      if (*t.key.day == 0) continue;
      if (it == by_key.end()) {
        throw ArgumentError("coverage: no summary for theta of individual " +
                            std::to_string(*t.key.individual + 1) + ", day " +
                            std::to_string(*t.key.day));
      }
      const std::size_t i = *t.key.individual;
      if (i >= hits.size()) {
        hits.resize(i + 1, 0);
        points.resize(i + 1, 0);
      }
      ++points[i];
      if (inside(*it->second, t.value)) ++hits[i];
      continue;
    }
    if (it == by_key.end()) continue;
    const bool hit = inside(*it->second, t.value);
    ++report.parameters_total;
    if (hit) ++report.parameters_covered;
    report.parameter_hits.emplace_back(t.key, hit);
    if (t.key.quantity == Quantity::drift_sd) report.drift_sd_covered = hit;
  }
  std::size_t total_hits = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    report.theta_per_individual.push_back(
        points[i] == 0 ? 0.0 : static_cast<double>(hits[i]) / static_cast<double>(points[i]));
    total_hits += hits[i];
    report.theta_points += points[i];
  }
  report.theta_overall = report.theta_points == 0
                             ? 0.0
                             : static_cast<double>(total_hits) / static_cast<double>(report.theta_points);
  report.parameter_fraction =
      report.parameters_total == 0
          ? 0.0
          : static_cast<double>(report.parameters_covered) / static_cast<double>(report.parameters_total);
  return report;
}

std::vector<TruthRow> truth_rows(const Dataset& data, const SimTruth& truth) {
  std::vector<TruthRow> rows;
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    for (std::size_t t = 0; t <= data.num_days(i); ++t) {
      rows.push_back({{Quantity::theta, i, t}, truth.theta[data.theta_begin(i) + t]});
    }
  }
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    rows.push_back({{Quantity::growth, i, {}}, truth.growth[i]});
  }
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    rows.push_back({{Quantity::day_effect_sd, i, {}}, 1.0 / std::sqrt(truth.day_effect_precision[i])});
  }
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    rows.push_back({{Quantity::test_effect_sd, i, {}}, 1.0 / std::sqrt(truth.test_effect_precision[i])});
  }
  rows.push_back({{Quantity::drift_sd, {}, {}}, 1.0 / std::sqrt(truth.drift_precision)});
  return rows;
}

OnlineResult fit_online(const Dataset& data, const ModelConstants& constants,
                        const SamplerConfig& config) {
  SamplerConfig base = config;
  base.mode = Mode::online;
  base.validate();
  constants.validate();
  constants.check_groups(data);
  base.threads = 1;

  const std::size_t n = data.num_individuals();
  OnlineResult result;
  result.trajectories.resize(n);
  const std::size_t sampling = config.n_iterations - config.burn_in;
  const auto warm_burn_in = static_cast<std::size_t>(
      std::llround(kOnlineBurnInFraction * static_cast<double>(config.burn_in)));

  auto run_individual = [&](std::size_t i) {
    std::optional<LatentState> previous;
    auto& trajectory = result.trajectories[i];
    for (std::size_t t = 1; t <= data.num_days(i); ++t) {
      const Dataset prefix = data.prefix(i, t);
      const bool relaxed = !validate_individual(prefix, 0).passed();
      ChainRequest request;
      request.data = &prefix;
      request.constants = &constants;
      request.config = base;
      request.config.seed = derive_seed(config.seed, i, t, 4);
      if (previous) {
        request.config.burn_in = warm_burn_in;
        request.config.n_iterations = warm_burn_in + sampling;
        request.initial = extend_state(*previous, prefix);
      }
      request.frozen_precisions = {relaxed};
      request.keys = {SeriesKey{Quantity::theta, 0, t}};
      ChainOutput chain = run_chain(request);
      const SummaryRow& s = chain.summaries.front();
      trajectory.push_back({t, s.q025, s.median, s.q975, relaxed});
      previous = std::move(chain.final_state);
    }
  };

  oneapi::tbb::task_arena arena(static_cast<int>(
      std::min<std::size_t>(resolve_threads(config.threads), std::max<std::size_t>(n, 1))));
  arena.execute([&] {
    oneapi::tbb::parallel_for(std::size_t{0}, n, [&](std::size_t i) { run_individual(i); });
  });
  return result;
}

RawScoreEstimate raw_score_estimate(std::span<const TestScore> tests) {
  std::size_t items = 0;
  std::size_t correct = 0;
  double a_min = std::numeric_limits<double>::infinity();
  double a_max = -std::numeric_limits<double>::infinity();
  for (const auto& t : tests) {
    if (t.correct > t.items) throw ArgumentError("raw_score_estimate: correct > items");
    items += t.items;
    correct += t.correct;
    if (t.items > 0) {
      a_min = std::min(a_min, t.difficulty);
      a_max = std::max(a_max, t.difficulty);
    }
  }
  if (items == 0) throw ArgumentError("raw_score_estimate: no items");
  if (correct == items) return {a_max + kRawScoreClamp, true};
  if (correct == 0) return {a_min - kRawScoreClamp, true};

  auto excess = [&](double theta) {
    double expected = 0.0;
    for (const auto& t : tests) {
      expected += static_cast<double>(t.items) / (1.0 + std::exp(t.difficulty - theta));
    }
    return expected - static_cast<double>(correct);
  };
  double lo = a_min - kRawScoreBracket;
  double hi = a_max + kRawScoreBracket;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (excess(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {0.5 * (lo + hi), false};
}

std::vector<std::vector<RawScoreEstimate>> raw_score_estimates(const Dataset& data) {
  std::vector<std::vector<RawScoreEstimate>> out(data.num_individuals());
  std::vector<TestScore> scores;
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    const IndexRange dr = data.days(i);
    for (std::size_t d = dr.begin; d < dr.end; ++d) {
      scores.clear();
      const IndexRange tr = data.tests(d);
      for (std::size_t s = tr.begin; s < tr.end; ++s) {
        TestScore score{data.difficulty(s), data.items(s).size(), 0};
        const IndexRange ir = data.items(s);
        for (std::size_t l = ir.begin; l < ir.end; ++l) score.correct += data.response(l);
        scores.push_back(score);
      }
      out[i].push_back(raw_score_estimate(scores));
    }
  }
  return out;
}

}  // namespace dirm
