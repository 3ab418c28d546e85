// dirm: simulate, validate, fit and summarize Dynamic Item Response models.
// Links only the C API in dirm.h.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dirm/dirm.h"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum ExitCode { kOk = 0, kRuntime = 1, kValidation = 2, kConfig = 3 };

struct Failure {
  ExitCode code;
  std::string message;
};

ExitCode exit_code(dirm_status s) {
  switch (s) {
    case DIRM_OK: return kOk;
    case DIRM_E_VALIDATION: return kValidation;
    case DIRM_E_ARGUMENT:
    case DIRM_E_CONFIG: return kConfig;
    default: return kRuntime;
  }
}

void check(dirm_status s) {
  if (s != DIRM_OK) throw Failure{exit_code(s), dirm_last_error()};
}

[[noreturn]] void config_error(const std::string& what) { throw Failure{kConfig, what}; }

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Owning wrappers for the C handles.
struct Dataset {
  dirm_dataset* h = nullptr;
  Dataset() = default;
  Dataset(const Dataset&) = delete;
  Dataset& operator=(const Dataset&) = delete;
  ~Dataset() { dirm_dataset_free(h); }
};
struct Truth {
  dirm_truth* h = nullptr;
  Truth() = default;
  Truth(const Truth&) = delete;
  Truth& operator=(const Truth&) = delete;
  ~Truth() { dirm_truth_free(h); }
};
struct FitResult {
  dirm_fit_result* h = nullptr;
  FitResult() = default;
  FitResult(const FitResult&) = delete;
  FitResult& operator=(const FitResult&) = delete;
  ~FitResult() { dirm_fit_free(h); }
};
struct OnlineResult {
  dirm_online_result* h = nullptr;
  OnlineResult() = default;
  OnlineResult(const OnlineResult&) = delete;
  OnlineResult& operator=(const OnlineResult&) = delete;
  ~OnlineResult() { dirm_online_free(h); }
};

// Flat JSON config; every key must be consumed.
class Config {
 public:
  Config() = default;
  explicit Config(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) config_error("cannot open config " + path);
    try {
      doc_ = json::parse(in);
    } catch (const json::exception& e) {
      config_error(path + ": " + e.what());
    }
    if (!doc_.is_object()) config_error(path + ": top level must be an object");
    for (const auto& [key, value] : doc_.items()) {
      if (value.is_object()) config_error(path + ": key '" + key + "' must not be nested");
    }
    path_ = path;
  }

  template <class T>
  std::optional<T> get(const std::string& key) {
    known_.insert(key);
    if (!doc_.contains(key)) return std::nullopt;
    try {
      return doc_.at(key).get<T>();
    } catch (const json::exception&) {
      config_error(path_ + ": key '" + key + "' has the wrong type");
    }
  }

  void reject_unknown() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!known_.count(key)) config_error(path_ + ": unknown key '" + key + "'");
    }
  }

 private:
  json doc_ = json::object();
  std::string path_;
  std::set<std::string> known_;
};

unsigned thread_cap() {
  const char* env = std::getenv("DIR_SAMPLER_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  const unsigned long v = std::strtoul(env, &end, 10);
  if (*end != '\0' || v == 0 || v > 4096) {
    config_error("DIR_SAMPLER_THREADS must be a positive integer");
  }
  return static_cast<unsigned>(v);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{kRuntime, "cannot create " + dir.string() + ": " + ec.message()};
}

void write_manifest(const fs::path& dir, json manifest) {
  json out;
  out["tool"] = "dirm";
  out["version"] = dirm_version();
  for (auto& [k, v] : manifest.items()) out[k] = v;
  std::ofstream f(dir / "manifest.json");
  if (!f) throw Failure{kRuntime, "cannot write " + (dir / "manifest.json").string()};
  f << out.dump(2) << '\n';
}

json dataset_json(const Dataset& data, const fs::path& source) {
  dirm_dataset_info info{};
  check(dirm_dataset_info_get(data.h, &info));
  json j;
  j["path"] = source.string();
  j["individuals"] = info.individuals;
  j["days"] = info.days;
  j["tests"] = info.tests;
  j["items"] = info.items;
  j["checksum"] = hex64(info.checksum);
  return j;
}

// ---- simulate ------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string output;
  bool paper_defaults = false;
  std::optional<std::uint64_t> seed;
};

std::vector<double> vec_or_empty(Config& cfg, const std::string& key, std::size_t n) {
  auto v = cfg.get<std::vector<double>>(key);
  if (!v) return {};
  if (v->size() != n) {
    config_error("'" + key + "' needs " + std::to_string(n) + " entries, got " +
                 std::to_string(v->size()));
  }
  return *v;
}

int cmd_simulate(const SimulateArgs& a) {
  dirm_sim_config sc;
  dirm_sim_config_reference(&sc);
  Config cfg(a.paper_defaults ? std::string{} : a.config);
  if (a.paper_defaults && !a.config.empty()) config_error("--paper-defaults excludes --config");
  sc.n = cfg.get<std::size_t>("n").value_or(sc.n);
  sc.T = cfg.get<std::size_t>("T").value_or(sc.T);
  sc.S = cfg.get<std::size_t>("S").value_or(sc.S);
  sc.K = cfg.get<std::size_t>("K").value_or(sc.K);
  sc.seed = cfg.get<std::uint64_t>("seed").value_or(sc.seed);
  sc.drift_sd = cfg.get<double>("drift_sd").value_or(sc.drift_sd);
  sc.sigma = cfg.get<double>("sigma").value_or(sc.sigma);
  sc.rho = cfg.get<double>("rho").value_or(sc.rho);
  sc.delta_tmax = cfg.get<double>("delta_tmax").value_or(sc.delta_tmax);
  sc.difficulty_halfwidth = cfg.get<double>("difficulty_halfwidth").value_or(sc.difficulty_halfwidth);
  sc.require_valid = cfg.get<bool>("require_valid").value_or(sc.require_valid != 0) ? 1 : 0;
  const auto growth = vec_or_empty(cfg, "growth", sc.n);
  const auto day_sd = vec_or_empty(cfg, "day_effect_sd", sc.n);
  const auto test_sd = vec_or_empty(cfg, "test_effect_sd", sc.n);
  const auto lapses = vec_or_empty(cfg, "lapses", sc.T);
  cfg.reject_unknown();
  if (a.seed) sc.seed = *a.seed;
  if (!growth.empty()) sc.growth = growth.data();
  if (!day_sd.empty()) sc.day_effect_sd = day_sd.data();
  if (!test_sd.empty()) sc.test_effect_sd = test_sd.data();
  if (!lapses.empty()) sc.lapses = lapses.data();

  Dataset data;
  Truth truth;
  check(dirm_simulate(&sc, &data.h, &truth.h));
  const fs::path out = a.output;
  ensure_dir(out);
  check(dirm_dataset_save_dir(data.h, out.string().c_str()));
  check(dirm_truth_save(truth.h, (out / "truth.csv").string().c_str()));

  json sim;
  sim["n"] = sc.n;
  sim["T"] = sc.T;
  sim["S"] = sc.S;
  sim["K"] = sc.K;
  sim["seed"] = sc.seed;
  sim["drift_sd"] = sc.drift_sd;
  sim["sigma"] = sc.sigma;
  sim["rho"] = sc.rho;
  sim["delta_tmax"] = sc.delta_tmax;
  sim["difficulty_halfwidth"] = sc.difficulty_halfwidth;
  sim["require_valid"] = sc.require_valid != 0;
  if (!growth.empty()) sim["growth"] = growth;
  if (!day_sd.empty()) sim["day_effect_sd"] = day_sd;
  if (!test_sd.empty()) sim["test_effect_sd"] = test_sd;
  if (!lapses.empty()) sim["lapses"] = lapses;
  json m;
  m["command"] = "simulate";
  m["paper_defaults"] = a.paper_defaults;
  m["config"] = sim;
  m["dataset"] = dataset_json(data, out);
  m["files"] = {"responses.csv", "lapses.csv", "groups.csv", "truth.csv"};
  write_manifest(out, m);

  dirm_dataset_info info{};
  check(dirm_dataset_info_get(data.h, &info));
  std::cout << "simulated " << info.individuals << " individuals, " << info.days << " days, "
            << info.items << " responses -> " << out.string() << '\n';
  return kOk;
}

// ---- validate ------------------------------------------------------------

struct ValidateArgs {
  std::string data;
  std::string output;
};

// Prints the report; returns true when the dataset passes.
bool run_validation(const Dataset& data, std::string* clause_out = nullptr) {
  int passed = 0;
  std::string clause(512, '\0');
  std::string report(1 << 16, '\0');
  check(dirm_dataset_validate(data.h, &passed, clause.data(), clause.size(), report.data(),
                              report.size()));
  clause.resize(std::strlen(clause.c_str()));
  report.resize(std::strlen(report.c_str()));
  if (passed) {
    std::cout << "validation passed\n";
  } else {
    std::cerr << "validation failed: " << clause << '\n' << report;
    if (!report.empty() && report.back() != '\n') std::cerr << '\n';
  }
  if (clause_out) *clause_out = clause;
  return passed != 0;
}

int cmd_validate(const ValidateArgs& a) {
  Dataset data;
  check(dirm_dataset_load_dir(a.data.c_str(), &data.h));
  std::string clause;
  const bool ok = run_validation(data, &clause);
  if (!a.output.empty()) {
    const fs::path out = a.output;
    ensure_dir(out);
    std::ofstream f(out / "validation.csv");
    f << "passed,first_clause\n" << (ok ? 1 : 0) << ",\"" << clause << "\"\n";
    json m;
    m["command"] = "validate";
    m["dataset"] = dataset_json(data, a.data);
    m["passed"] = ok;
    m["first_clause"] = clause;
    write_manifest(out, m);
  }
  return ok ? kOk : kValidation;
}

// ---- fit / online --------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string config;
  std::string output;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> iterations;
  std::optional<std::uint64_t> burn_in;
  std::optional<std::uint64_t> thin;
  std::optional<std::size_t> chains;
  std::optional<double> drift_sd;
};

int cmd_fit(const FitArgs& a) {
  Config cfg(a.config);
  dirm_constants mc;
  dirm_constants_default(&mc);
  mc.sigma = cfg.get<double>("sigma").value_or(mc.sigma);
  mc.rho = cfg.get<double>("rho").value_or(mc.rho);
  mc.delta_tmax = cfg.get<double>("delta_tmax").value_or(mc.delta_tmax);
  const auto means = cfg.get<std::vector<double>>("group_means").value_or(std::vector<double>{});
  const auto vars = cfg.get<std::vector<double>>("group_variances").value_or(std::vector<double>{});
  if (means.size() != vars.size()) config_error("group_means and group_variances differ in length");
  mc.group_means = means.empty() ? nullptr : means.data();
  mc.group_variances = vars.empty() ? nullptr : vars.data();
  mc.num_groups = means.size();

  dirm_sampler_config sc;
  dirm_sampler_config_default(&sc);
  sc.n_iterations = a.iterations.value_or(cfg.get<std::uint64_t>("iterations").value_or(sc.n_iterations));
  sc.burn_in = a.burn_in.value_or(cfg.get<std::uint64_t>("burn_in").value_or(sc.burn_in));
  sc.thin = a.thin.value_or(cfg.get<std::uint64_t>("thin").value_or(sc.thin));
  sc.seed = a.seed.value_or(cfg.get<std::uint64_t>("seed").value_or(sc.seed));
  sc.chains = a.chains.value_or(cfg.get<std::size_t>("chains").value_or(sc.chains));
  const auto cfg_drift = cfg.get<double>("drift_sd");
  const std::string mode = !a.mode.empty() ? a.mode : cfg.get<std::string>("mode").value_or("retrospective");
  cfg.reject_unknown();
  if (mode != "retrospective" && mode != "online") {
    config_error("mode must be 'retrospective' or 'online'");
  }
  sc.mode = mode == "online" ? DIRM_MODE_ONLINE : DIRM_MODE_RETROSPECTIVE;
  const std::optional<double> drift = a.drift_sd ? a.drift_sd : cfg_drift;
  if (drift && !(*drift > 0.0)) config_error("drift-sd must be > 0");
  if (sc.mode == DIRM_MODE_ONLINE && !drift) config_error("online mode requires --drift-sd");
  sc.drift_sd = drift.value_or(0.0);
  sc.threads = thread_cap();
  if (sc.chains == 0) config_error("chains must be >= 1");
  if (sc.mode == DIRM_MODE_ONLINE && sc.chains != 1) config_error("online mode runs a single chain");

  Dataset data;
  check(dirm_dataset_load_dir(a.data.c_str(), &data.h));
  if (sc.mode == DIRM_MODE_RETROSPECTIVE && !run_validation(data)) return kValidation;

  // Output directory is created only after the sampler accepted its configuration.
  const fs::path out = a.output;
  json files = json::array();
  if (sc.mode == DIRM_MODE_ONLINE) {
    OnlineResult res;
    check(dirm_fit_online(data.h, &mc, &sc, &res.h));
    ensure_dir(out);
    check(dirm_online_write(res.h, (out / "online.csv").string().c_str()));
    files.push_back("online.csv");
  } else {
    FitResult res;
    check(dirm_fit(data.h, &mc, &sc, &res.h));
    ensure_dir(out);
    const std::size_t n = dirm_fit_num_chains(res.h);
    if (n == 1) {
      check(dirm_fit_write_chain(res.h, 0, (out / "traces.csv").string().c_str(),
                                 (out / "summary.csv").string().c_str()));
      files.push_back("traces.csv");
      files.push_back("summary.csv");
    } else {
      for (std::size_t c = 0; c < n; ++c) {
        const fs::path sub = out / ("chain_" + std::to_string(c + 1));
        ensure_dir(sub);
        check(dirm_fit_write_chain(res.h, c, (sub / "traces.csv").string().c_str(),
                                   (sub / "summary.csv").string().c_str()));
        files.push_back((fs::path(sub.filename()) / "traces.csv").string());
        files.push_back((fs::path(sub.filename()) / "summary.csv").string());
      }
      check(dirm_fit_write_pooled(res.h, (out / "summary.csv").string().c_str()));
      files.push_back("summary.csv");
    }
    double wall = 0.0;
    for (std::size_t c = 0; c < n; ++c) wall = std::max(wall, dirm_fit_wall_seconds(res.h, c));
    std::cout << "fitted " << n << " chain(s) in " << wall << " s\n";
  }
  check(dirm_raw_scores_write(data.h, (out / "raw_scores.csv").string().c_str()));
  files.push_back("raw_scores.csv");

  json constants;
  constants["sigma"] = mc.sigma;
  constants["rho"] = mc.rho;
  constants["delta_tmax"] = mc.delta_tmax;
  constants["group_means"] = means.empty() ? std::vector<double>{0.0} : means;
  constants["group_variances"] = vars.empty() ? std::vector<double>{1.0} : vars;
  json sampler;
  sampler["mode"] = mode;
  sampler["iterations"] = sc.n_iterations;
  sampler["burn_in"] = sc.burn_in;
  sampler["thin"] = sc.thin;
  sampler["seed"] = sc.seed;
  sampler["chains"] = sc.chains;
  sampler["drift_sd"] = drift ? json(*drift) : json(nullptr);
  json m;
  m["command"] = "fit";
  m["constants"] = constants;
  m["sampler"] = sampler;
  m["threads_note"] = "results do not depend on DIR_SAMPLER_THREADS";
  m["dataset"] = dataset_json(data, a.data);
  m["files"] = files;
  write_manifest(out, m);
  return kOk;
}

// ---- summarize -----------------------------------------------------------

struct SummarizeArgs {
  std::string input;
  std::string truth;
  std::string output;
};

int cmd_summarize(const SummarizeArgs& a) {
  const fs::path in = a.input;
  const fs::path out = a.output.empty() ? in : fs::path(a.output);
  ensure_dir(out);
  const fs::path traces = in / "traces.csv";
  fs::path summary = in / "summary.csv";
  if (fs::exists(traces)) {
    summary = out / "summary.csv";
    check(dirm_summarize_traces(traces.string().c_str(), summary.string().c_str()));
    std::cout << "summary recomputed from " << traces.string() << '\n';
  } else if (!fs::exists(summary)) {
    throw Failure{kRuntime, "no traces.csv or summary.csv in " + in.string()};
  }
  json m;
  m["command"] = "summarize";
  m["input"] = in.string();
  json files = json::array({"summary.csv"});

  fs::path truth = a.truth;
  if (truth.empty() && fs::exists(in / "truth.csv")) truth = in / "truth.csv";
  if (!truth.empty()) {
    dirm_coverage cov{};
    std::vector<double> per(4096);
    std::size_t count = 0;
    check(dirm_coverage_from_files(summary.string().c_str(), truth.string().c_str(),
                                   (out / "coverage.csv").string().c_str(), &cov, per.data(),
                                   per.size(), &count));
    per.resize(std::min(count, per.size()));
    std::printf("%-12s %10s\n", "individual", "theta_cov");
    for (std::size_t i = 0; i < per.size(); ++i) std::printf("%-12zu %9.1f%%\n", i + 1, 100.0 * per[i]);
    std::printf("overall theta coverage: %.1f%% over %zu points\n", 100.0 * cov.theta_overall,
                cov.theta_points);
    std::printf("parameter coverage: %zu / %zu (%.1f%%)\n", cov.parameters_covered,
                cov.parameters_total, 100.0 * cov.parameter_fraction);
    if (cov.drift_sd_covered >= 0) {
      std::printf("drift sd covered: %s\n", cov.drift_sd_covered ? "yes" : "no");
    }
    m["truth"] = truth.string();
    m["theta_coverage"] = cov.theta_overall;
    m["parameter_coverage"] = cov.parameter_fraction;
    files.push_back("coverage.csv");
  }
  m["files"] = files;
  write_manifest(out, m);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic Item Response model: simulation, validation and Gibbs fitting"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dirm_version()));

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate a dataset with known truth");
  simulate->add_option("-c,--config", sim.config, "Flat JSON simulation config")->check(CLI::ExistingFile);
  simulate->add_flag("--paper-defaults", sim.paper_defaults, "Ten individuals, fifty days, four tests of ten items");
  simulate->add_option("--seed", sim.seed, "RNG seed");
  simulate->add_option("-o,--output", sim.output, "Output directory")->required();

  ValidateArgs val;
  auto* validate = app.add_subcommand("validate", "Check posterior propriety conditions");
  validate->add_option("data", val.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  validate->add_option("-o,--output", val.output, "Optional report directory");

  FitArgs fa;
  auto add_fit_options = [&fa](CLI::App* sub, bool with_mode) {
    sub->add_option("data", fa.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    sub->add_option("-c,--config", fa.config, "Flat JSON model and sampler config")->check(CLI::ExistingFile);
    sub->add_option("-o,--output", fa.output, "Output directory")->required();
    sub->add_option("--seed", fa.seed, "RNG seed");
    sub->add_option("--iterations", fa.iterations, "Total Gibbs iterations (default 50000)");
    sub->add_option("--burn-in", fa.burn_in, "Discarded iterations (default 30000)");
    sub->add_option("--thin", fa.thin, "Keep every thin-th draw (default 10)");
    sub->add_option("--chains", fa.chains, "Independent chains (default 1)");
    sub->add_option("--drift-sd", fa.drift_sd, "Fixed drift sd; required in online mode");
    if (with_mode) {
      sub->add_option("--mode", fa.mode, "retrospective or online")
          ->check(CLI::IsMember({"retrospective", "online"}));
    }
  };
  auto* fit = app.add_subcommand("fit", "Fit the model by Gibbs sampling");
  add_fit_options(fit, true);
  auto* online = app.add_subcommand("online", "Alias for fit --mode online");
  add_fit_options(online, false);

  SummarizeArgs sa;
  auto* summarize = app.add_subcommand("summarize", "Recompute quantiles and coverage");
  summarize->add_option("input", sa.input, "Fit output directory")->required()->check(CLI::ExistingDirectory);
  summarize->add_option("--truth", sa.truth, "Truth CSV from simulate")->check(CLI::ExistingFile);
  summarize->add_option("-o,--output", sa.output, "Output directory (default: input)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*validate) return cmd_validate(val);
    if (*fit) return cmd_fit(fa);
    if (*online) {
      fa.mode = "online";
      return cmd_fit(fa);
    }
    if (*summarize) return cmd_summarize(sa);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kRuntime;
}
