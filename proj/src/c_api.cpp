#include "dirm/dirm.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <limits>
#include <memory>
#include <new>
#include <string>

#include "dirm/csv_io.hpp"
#include "dirm/error.hpp"
#include "dirm/inference.hpp"
#include "dirm/model.hpp"
#include "dirm/simgen.hpp"

struct dirm_dataset {
  dirm::Dataset data;
};

struct dirm_truth {
  dirm::Dataset data;
  dirm::SimTruth truth;
};

struct dirm_fit_result {
  std::vector<dirm::ChainOutput> chains;
};

struct dirm_online_result {
  dirm::OnlineResult result;
};

namespace {

thread_local std::string g_last_error;

dirm_status fail(dirm_status status, const char* what) {
  g_last_error = what;
  return status;
}

// Runs `body`, mapping library exceptions onto status codes.
template <class F>
dirm_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return DIRM_OK;
  } catch (const dirm::ArgumentError& e) {
    return fail(DIRM_E_ARGUMENT, e.what());
  } catch (const dirm::ConfigError& e) {
    return fail(DIRM_E_CONFIG, e.what());
  } catch (const dirm::ValidationError& e) {
    return fail(DIRM_E_VALIDATION, e.what());
  } catch (const dirm::NumericError& e) {
    return fail(DIRM_E_NUMERIC, e.what());
  } catch (const dirm::IoError& e) {
    return fail(DIRM_E_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(DIRM_E_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(DIRM_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DIRM_E_INTERNAL, e.what());
  } catch (...) {
    return fail(DIRM_E_INTERNAL, "unknown error");
  }
}

template <class T>
void require(const T* p, const char* name) {
  if (p == nullptr) throw dirm::ArgumentError(std::string(name) + " is null");
}

void copy_out(const std::string& s, char* buf, std::size_t cap) {
  if (buf == nullptr || cap == 0) return;
  const std::size_t n = std::min(s.size(), cap - 1);
  std::memcpy(buf, s.data(), n);
  buf[n] = '\0';
}

double sd_to_precision(double sd, const char* name) {
  if (!(sd >= 0.0) || !std::isfinite(sd)) {
    throw dirm::ConfigError(std::string(name) + " must be a finite sd >= 0");
  }
  return sd == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / (sd * sd);
}

dirm::ModelConstants to_constants(const dirm_constants* c) {
  dirm::ModelConstants out;
  if (c != nullptr) {
    out.sigma = c->sigma;
    out.rho = c->rho;
    out.delta_tmax = c->delta_tmax;
    if (c->num_groups > 0) {
      require(c->group_means, "group_means");
      require(c->group_variances, "group_variances");
      out.group_prior.clear();
      for (std::size_t g = 0; g < c->num_groups; ++g) {
        out.group_prior.push_back({c->group_means[g], c->group_variances[g]});
      }
    }
  }
  out.validate();
  return out;
}

dirm::SamplerConfig to_sampler(const dirm_sampler_config* c) {
  require(c, "sampler config");
  dirm::SamplerConfig out;
  out.n_iterations = c->n_iterations;
  out.burn_in = c->burn_in;
  out.thin = c->thin;
  out.seed = c->seed;
  if (c->mode != DIRM_MODE_RETROSPECTIVE && c->mode != DIRM_MODE_ONLINE) {
    throw dirm::ConfigError("unknown sampler mode");
  }
  out.mode = c->mode == DIRM_MODE_ONLINE ? dirm::Mode::online : dirm::Mode::retrospective;
  if (c->drift_sd > 0.0) out.fixed_drift_sd = c->drift_sd;
  out.threads = c->threads;
  out.validate();
  return out;
}

}  // namespace

extern "C" {

const char* dirm_version(void) { return "1.0.0"; }

const char* dirm_status_name(dirm_status status) {
  switch (status) {
    case DIRM_OK: return "ok";
    case DIRM_E_ARGUMENT: return "argument error";
    case DIRM_E_CONFIG: return "config error";
    case DIRM_E_VALIDATION: return "validation failure";
    case DIRM_E_NUMERIC: return "numeric error";
    case DIRM_E_IO: return "I/O error";
    case DIRM_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* dirm_last_error(void) { return g_last_error.c_str(); }

dirm_status dirm_dataset_load(const char* responses_csv, const char* lapses_csv,
                              const char* groups_csv, dirm_dataset** out) {
  return guarded([&] {
    require(responses_csv, "responses path");
    require(lapses_csv, "lapses path");
    require(groups_csv, "groups path");
    require(out, "out");
    *out = new dirm_dataset{dirm::io::read_dataset(responses_csv, lapses_csv, groups_csv)};
  });
}

dirm_status dirm_dataset_load_dir(const char* dir, dirm_dataset** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    *out = new dirm_dataset{dirm::io::read_dataset_dir(dir)};
  });
}

dirm_status dirm_dataset_save_dir(const dirm_dataset* data, const char* dir) {
  return guarded([&] {
    require(data, "dataset");
    require(dir, "dir");
    dirm::io::write_dataset_dir(dir, data->data);
  });
}

dirm_status dirm_dataset_info_get(const dirm_dataset* data, dirm_dataset_info* out) {
  return guarded([&] {
    require(data, "dataset");
    require(out, "out");
    const dirm::Dataset& d = data->data;
    out->individuals = d.num_individuals();
    out->days = d.num_days_total();
    out->tests = d.num_tests_total();
    out->items = d.num_items_total();
    out->groups = d.num_groups();
    out->checksum = d.checksum();
  });
}

void dirm_dataset_free(dirm_dataset* data) { delete data; }

dirm_status dirm_dataset_validate(const dirm_dataset* data, int* passed, char* clause,
                                  std::size_t clause_cap, char* report, std::size_t report_cap) {
  return guarded([&] {
    require(data, "dataset");
    require(passed, "passed");
    const dirm::ValidationReport r = dirm::validate_dataset(data->data);
    *passed = r.passed() ? 1 : 0;
    copy_out(r.first_clause(), clause, clause_cap);
    copy_out(r.to_string(), report, report_cap);
  });
}

void dirm_constants_default(dirm_constants* out) {
  if (out == nullptr) return;
  const dirm::ModelConstants c;
  *out = dirm_constants{c.sigma, c.rho, c.delta_tmax, nullptr, nullptr, 0};
}

void dirm_sim_config_reference(dirm_sim_config* out) {
  if (out == nullptr) return;
  const dirm::SimConfig c = dirm::SimConfig::reference_design();
  *out = dirm_sim_config{};
  out->n = c.n;
  out->T = c.T;
  out->S = c.S;
  out->K = c.K;
  out->seed = c.seed;
  out->drift_sd = 1.0 / std::sqrt(c.drift_precision);
  out->sigma = c.sigma;
  out->rho = c.rho;
  out->delta_tmax = c.delta_tmax;
  out->difficulty_halfwidth = c.difficulty_halfwidth;
  out->require_valid = c.require_valid ? 1 : 0;
}

dirm_status dirm_simulate(const dirm_sim_config* config, dirm_dataset** data, dirm_truth** truth) {
  return guarded([&] {
    require(config, "simulation config");
    require(data, "data");
    require(truth, "truth");
    const bool builtin = config->growth == nullptr || config->day_effect_sd == nullptr ||
                         config->test_effect_sd == nullptr;
    dirm::SimConfig cfg;
    if (builtin) {
      if (config->n < 1) throw dirm::ConfigError("simulation counts must be >= 1");
      cfg = dirm::SimConfig::scaled(config->n, config->T, config->S, config->K);
    }
    cfg.n = config->n;
    cfg.T = config->T;
    cfg.S = config->S;
    cfg.K = config->K;
    cfg.seed = config->seed;
    if (config->growth != nullptr) cfg.growth.assign(config->growth, config->growth + cfg.n);
    if (config->day_effect_sd != nullptr) {
      cfg.day_effect_precision.clear();
      for (std::size_t i = 0; i < cfg.n; ++i) {
        cfg.day_effect_precision.push_back(sd_to_precision(config->day_effect_sd[i], "day_effect_sd"));
      }
    }
    if (config->test_effect_sd != nullptr) {
      cfg.test_effect_precision.clear();
      for (std::size_t i = 0; i < cfg.n; ++i) {
        cfg.test_effect_precision.push_back(
            sd_to_precision(config->test_effect_sd[i], "test_effect_sd"));
      }
    }
    cfg.drift_precision = sd_to_precision(config->drift_sd, "drift_sd");
    cfg.sigma = config->sigma;
    cfg.rho = config->rho;
    cfg.delta_tmax = config->delta_tmax;
    cfg.difficulty_halfwidth = config->difficulty_halfwidth;
    if (config->lapses != nullptr) cfg.lapses.assign(config->lapses, config->lapses + cfg.T);
    cfg.require_valid = config->require_valid != 0;
    auto [d, t] = dirm::simulate_dataset(cfg);
    auto ds = std::make_unique<dirm_dataset>(dirm_dataset{d});
    *truth = new dirm_truth{std::move(d), std::move(t)};
    *data = ds.release();
  });
}

dirm_status dirm_truth_save(const dirm_truth* truth, const char* path) {
  return guarded([&] {
    require(truth, "truth");
    require(path, "path");
    dirm::io::write_truth(path, truth->data, truth->truth);
  });
}

void dirm_truth_free(dirm_truth* truth) { delete truth; }

void dirm_sampler_config_default(dirm_sampler_config* out) {
  if (out == nullptr) return;
  const dirm::SamplerConfig c;
  *out = dirm_sampler_config{c.n_iterations, c.burn_in, c.thin, c.seed, DIRM_MODE_RETROSPECTIVE,
                             0.0, c.threads, 1};
}

dirm_status dirm_fit(const dirm_dataset* data, const dirm_constants* constants,
                     const dirm_sampler_config* config, dirm_fit_result** out) {
  return guarded([&] {
    require(data, "dataset");
    require(out, "out");
    const dirm::SamplerConfig sampler = to_sampler(config);
    const dirm::ModelConstants mc = to_constants(constants);
    const std::size_t chains = std::max<std::size_t>(config->chains, 1);
    *out = new dirm_fit_result{dirm::fit_chains(data->data, mc, sampler, chains)};
  });
}

std::size_t dirm_fit_num_chains(const dirm_fit_result* result) {
  return result == nullptr ? 0 : result->chains.size();
}

double dirm_fit_wall_seconds(const dirm_fit_result* result, std::size_t chain) {
  if (result == nullptr || chain >= result->chains.size()) return 0.0;
  return result->chains[chain].wall_seconds;
}

dirm_status dirm_fit_write_chain(const dirm_fit_result* result, std::size_t chain,
                                 const char* traces_csv, const char* summary_csv) {
  return guarded([&] {
    require(result, "fit result");
    if (chain >= result->chains.size()) throw dirm::ArgumentError("chain index out of range");
    const dirm::ChainOutput& c = result->chains[chain];
    if (traces_csv != nullptr) dirm::io::write_traces(traces_csv, c);
    if (summary_csv != nullptr) dirm::io::write_summaries(summary_csv, c.summaries);
  });
}

dirm_status dirm_fit_write_pooled(const dirm_fit_result* result, const char* summary_csv) {
  return guarded([&] {
    require(result, "fit result");
    require(summary_csv, "path");
    dirm::io::write_summaries(summary_csv, dirm::pool_summaries(result->chains));
  });
}

void dirm_fit_free(dirm_fit_result* result) { delete result; }

dirm_status dirm_fit_online(const dirm_dataset* data, const dirm_constants* constants,
                            const dirm_sampler_config* config, dirm_online_result** out) {
  return guarded([&] {
    require(data, "dataset");
    require(out, "out");
    dirm::SamplerConfig sampler = to_sampler(config);
    sampler.mode = dirm::Mode::online;
    sampler.validate();
    *out = new dirm_online_result{dirm::fit_online(data->data, to_constants(constants), sampler)};
  });
}

dirm_status dirm_online_write(const dirm_online_result* result, const char* path) {
  return guarded([&] {
    require(result, "online result");
    require(path, "path");
    dirm::io::write_online(path, result->result);
  });
}

dirm_status dirm_online_endpoint(const dirm_online_result* result, std::size_t individual,
                                 double* median) {
  return guarded([&] {
    require(result, "online result");
    require(median, "median");
    const auto& traj = result->result.trajectories;
    if (individual >= traj.size() || traj[individual].empty()) {
      throw dirm::ArgumentError("individual index out of range");
    }
    *median = traj[individual].back().median;
  });
}

void dirm_online_free(dirm_online_result* result) { delete result; }

dirm_status dirm_raw_scores_write(const dirm_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "dataset");
    require(path, "path");
    dirm::io::write_raw_scores(path, dirm::raw_score_estimates(data->data));
  });
}

dirm_status dirm_summarize_traces(const char* traces_csv, const char* summary_csv) {
  return guarded([&] {
    require(traces_csv, "traces path");
    require(summary_csv, "summary path");
    const dirm::io::Trace trace = dirm::io::read_traces(traces_csv);
    std::vector<dirm::SummaryRow> rows;
    rows.reserve(trace.keys.size());
    for (std::size_t k = 0; k < trace.keys.size(); ++k) {
      rows.push_back(dirm::summarize_series(trace.keys[k], trace.draws[k]));
    }
    dirm::io::write_summaries(summary_csv, rows);
  });
}

dirm_status dirm_coverage_from_files(const char* summary_csv, const char* truth_csv,
                                     const char* report_csv, dirm_coverage* out,
                                     double* per_individual, std::size_t cap, std::size_t* count) {
  return guarded([&] {
    require(summary_csv, "summary path");
    require(truth_csv, "truth path");
    require(out, "out");
    const auto summary = dirm::io::read_summaries(summary_csv);
    const auto truth = dirm::io::read_truth(truth_csv);
    const dirm::CoverageReport r = dirm::coverage(summary, truth);
    out->theta_overall = r.theta_overall;
    out->theta_points = r.theta_points;
    out->parameter_fraction = r.parameter_fraction;
    out->parameters_covered = r.parameters_covered;
    out->parameters_total = r.parameters_total;
    out->drift_sd_covered = r.drift_sd_covered ? (*r.drift_sd_covered ? 1 : 0) : -1;
    if (per_individual != nullptr) {
      const std::size_t n = std::min(cap, r.theta_per_individual.size());
      std::copy_n(r.theta_per_individual.begin(), n, per_individual);
    }
    if (count != nullptr) *count = r.theta_per_individual.size();
    if (report_csv != nullptr) dirm::io::write_coverage(report_csv, r);
  });
}

}  // extern "C"
