#ifndef DIRM_DIRM_H
#define DIRM_DIRM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(DIRM_BUILDING)
#    define DIRM_API __declspec(dllexport)
#  else
#    define DIRM_API __declspec(dllimport)
#  endif
#else
#  define DIRM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dirm_status {
  DIRM_OK = 0,
  DIRM_E_ARGUMENT = 1,   /* null handle, bad index, malformed request */
  DIRM_E_CONFIG = 2,     /* invalid constants, sampler or simulation settings, bad CSV */
  DIRM_E_VALIDATION = 3, /* dataset fails the posterior propriety gate */
  DIRM_E_NUMERIC = 4,    /* sampler hit a degenerate or non-finite quantity */
  DIRM_E_IO = 5,
  DIRM_E_INTERNAL = 6
} dirm_status;

typedef enum dirm_mode { DIRM_MODE_RETROSPECTIVE = 0, DIRM_MODE_ONLINE = 1 } dirm_mode;

typedef struct dirm_dataset dirm_dataset;
typedef struct dirm_truth dirm_truth;
typedef struct dirm_fit_result dirm_fit_result;
typedef struct dirm_online_result dirm_online_result;

DIRM_API const char* dirm_version(void);
DIRM_API const char* dirm_status_name(dirm_status status);
/* Message of the last failed call on this thread; "" if none. */
DIRM_API const char* dirm_last_error(void);

/* ---- dataset -------------------------------------------------------- */

typedef struct dirm_dataset_info {
  size_t individuals;
  size_t days;  /* sum over individuals */
  size_t tests;
  size_t items;
  size_t groups;
  uint64_t checksum;
} dirm_dataset_info;

DIRM_API dirm_status dirm_dataset_load(const char* responses_csv, const char* lapses_csv,
                                       const char* groups_csv, dirm_dataset** out);
/* Reads responses.csv, lapses.csv and groups.csv from `dir`. */
DIRM_API dirm_status dirm_dataset_load_dir(const char* dir, dirm_dataset** out);
DIRM_API dirm_status dirm_dataset_save_dir(const dirm_dataset* data, const char* dir);
DIRM_API dirm_status dirm_dataset_info_get(const dirm_dataset* data, dirm_dataset_info* out);
DIRM_API void dirm_dataset_free(dirm_dataset* data);

/* Runs the propriety gate. `*passed` is 1 or 0. The first violated clause and
   the full report are copied NUL-terminated into the buffers when non-null,
   truncated to capacity. */
DIRM_API dirm_status dirm_dataset_validate(const dirm_dataset* data, int* passed, char* clause,
                                           size_t clause_cap, char* report, size_t report_cap);

/* ---- model constants ------------------------------------------------ */

typedef struct dirm_constants {
  double sigma;
  double rho;
  double delta_tmax;
  /* Group priors N(mean, variance); num_groups == 0 means one N(0, 1) group. */
  const double* group_means;
  const double* group_variances;
  size_t num_groups;
} dirm_constants;

DIRM_API void dirm_constants_default(dirm_constants* out);

/* ---- simulation ----------------------------------------------------- */

typedef struct dirm_sim_config {
  size_t n, T, S, K;
  uint64_t seed;
  /* Per-individual truths of length n; null selects the first n entries of
     the built-in ten-individual design. An infinite sd entry is not allowed;
     use 0 to switch an effect off. */
  const double* growth;
  const double* day_effect_sd;
  const double* test_effect_sd;
  double drift_sd;
  double sigma;
  double rho;
  double delta_tmax;
  double difficulty_halfwidth;
  /* Lapse per day (length T); null selects the default schedule. */
  const double* lapses;
  int require_valid;
} dirm_sim_config;

/* Ten individuals, fifty days, four tests of ten items. */
DIRM_API void dirm_sim_config_reference(dirm_sim_config* out);
DIRM_API dirm_status dirm_simulate(const dirm_sim_config* config, dirm_dataset** data,
                                   dirm_truth** truth);
/* quantity,individual,day,test,item,value */
DIRM_API dirm_status dirm_truth_save(const dirm_truth* truth, const char* path);
DIRM_API void dirm_truth_free(dirm_truth* truth);

/* ---- fitting -------------------------------------------------------- */

typedef struct dirm_sampler_config {
  uint64_t n_iterations;
  uint64_t burn_in;
  uint64_t thin;
  uint64_t seed;
  dirm_mode mode;
  /* phi^{-1/2}; <= 0 means unset (required > 0 in online mode). */
  double drift_sd;
  /* Parallelism cap; 0 uses all hardware threads. */
  unsigned threads;
  size_t chains;
} dirm_sampler_config;

/* 50000 iterations, 30000 burn-in, thin 10, seed 1, retrospective, 1 chain. */
DIRM_API void dirm_sampler_config_default(dirm_sampler_config* out);

DIRM_API dirm_status dirm_fit(const dirm_dataset* data, const dirm_constants* constants,
                              const dirm_sampler_config* config, dirm_fit_result** out);
DIRM_API size_t dirm_fit_num_chains(const dirm_fit_result* result);
DIRM_API double dirm_fit_wall_seconds(const dirm_fit_result* result, size_t chain);
/* Traces: quantity,individual,day,iteration,value. Summaries:
   quantity,individual,day,q025,median,q975. Either path may be null. */
DIRM_API dirm_status dirm_fit_write_chain(const dirm_fit_result* result, size_t chain,
                                          const char* traces_csv, const char* summary_csv);
/* Quantiles over all chains' draws. */
DIRM_API dirm_status dirm_fit_write_pooled(const dirm_fit_result* result, const char* summary_csv);
DIRM_API void dirm_fit_free(dirm_fit_result* result);

/* Per-day refits on data prefixes; config->drift_sd must be > 0. */
DIRM_API dirm_status dirm_fit_online(const dirm_dataset* data, const dirm_constants* constants,
                                     const dirm_sampler_config* config, dirm_online_result** out);
/* individual,day,q025,median,q975,relaxed */
DIRM_API dirm_status dirm_online_write(const dirm_online_result* result, const char* path);
/* Endpoint (last day) median of an individual. */
DIRM_API dirm_status dirm_online_endpoint(const dirm_online_result* result, size_t individual,
                                          double* median);
DIRM_API void dirm_online_free(dirm_online_result* result);

/* Raw-score ability per (individual, day): individual,day,theta,saturated */
DIRM_API dirm_status dirm_raw_scores_write(const dirm_dataset* data, const char* path);

/* ---- summaries and coverage ----------------------------------------- */

/* Recomputes quantiles from a traces CSV. */
DIRM_API dirm_status dirm_summarize_traces(const char* traces_csv, const char* summary_csv);

typedef struct dirm_coverage {
  double theta_overall;
  size_t theta_points;
  double parameter_fraction;
  size_t parameters_covered;
  size_t parameters_total;
  /* 1 covered, 0 not covered, -1 no drift_sd truth. */
  int drift_sd_covered;
} dirm_coverage;

/* Coverage of truth values by 95% intervals of a summary CSV. Per-individual
   ability coverage is copied into `per_individual` (up to `cap` entries) and
   the count stored in `*count`. `report_csv` may be null. */
DIRM_API dirm_status dirm_coverage_from_files(const char* summary_csv, const char* truth_csv,
                                              const char* report_csv, dirm_coverage* out,
                                              double* per_individual, size_t cap, size_t* count);

#ifdef __cplusplus
}
#endif

#endif
