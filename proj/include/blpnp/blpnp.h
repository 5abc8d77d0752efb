#ifndef BLPNP_BLPNP_H
#define BLPNP_BLPNP_H

#include <stddef.h>
#include <stdint.h>

#if defined(BLPNP_BUILDING)
#define BLPNP_API __attribute__((visibility("default")))
#else
#define BLPNP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum blpnp_status {
  BLPNP_OK = 0,
  BLPNP_ERR_INPUT = 1,       /* invalid data, schema or settings */
  BLPNP_ERR_NUMERICAL = 2,   /* overflow, singular system */
  BLPNP_ERR_CONVERGENCE = 3, /* iterative solver ran out of iterations */
  BLPNP_ERR_INTERNAL = 4,
  BLPNP_ERR_NULL_ARG = 5
} blpnp_status;

typedef struct blpnp_dataset blpnp_dataset;
typedef struct blpnp_config blpnp_config;
typedef struct blpnp_run blpnp_run;

/* Message of the last failed call on this thread; never NULL. */
BLPNP_API const char* blpnp_last_error(void);
BLPNP_API const char* blpnp_version(void);

/* Strings returned through char** are owned by the caller. */
BLPNP_API void blpnp_string_free(char* s);

/* ---- datasets ---- */

BLPNP_API blpnp_status blpnp_dataset_load(const char* products_csv, const char* draws_csv, blpnp_dataset** out);

/* Simulated data. `settings` is a newline- or ';'-separated list of key=value
   pairs (J, T, N, zero_xi); NULL for defaults. */
BLPNP_API blpnp_status blpnp_dataset_generate(const char* settings, uint64_t seed, blpnp_dataset** out);
BLPNP_API blpnp_status blpnp_dataset_save(const blpnp_dataset* ds, const char* products_csv, const char* draws_csv);

/* dims: T, J, K, q, N, R */
BLPNP_API blpnp_status blpnp_dataset_dims(const blpnp_dataset* ds, int64_t dims[6]);

/* True theta (beta then sigma, 2K values) of a simulated dataset. */
BLPNP_API blpnp_status blpnp_dataset_truth(const blpnp_dataset* ds, double* theta, size_t len);
BLPNP_API void blpnp_dataset_free(blpnp_dataset* ds);

/* ---- settings ---- */

BLPNP_API blpnp_status blpnp_config_create(blpnp_config** out);
BLPNP_API blpnp_status blpnp_config_set(blpnp_config* cfg, const char* key, const char* value);
BLPNP_API blpnp_status blpnp_config_load(blpnp_config* cfg, const char* path);
BLPNP_API void blpnp_config_free(blpnp_config* cfg);

/* ---- estimation ---- */

/* method: "npgmm", "ablp" or "nfxp". Runs every start; a run whose starts all
   fail still returns BLPNP_OK with blpnp_run_converged() == 0. */
BLPNP_API blpnp_status blpnp_estimate(const blpnp_dataset* ds, const blpnp_config* cfg, const char* method,
                                      uint64_t seed, blpnp_run** out);
BLPNP_API blpnp_status blpnp_run_converged(const blpnp_run* run, int* converged);
/* Selected theta = (beta, sigma, pi row-major); len must be >= dim theta. */
BLPNP_API blpnp_status blpnp_run_theta(const blpnp_run* run, double* theta, size_t len);
BLPNP_API blpnp_status blpnp_run_json(const blpnp_run* run, char** json);
BLPNP_API void blpnp_run_free(blpnp_run* run);

/* Times `evaluations` criterion evaluations with and without gradient at the
   first random start, using `threads` threads. Result as JSON. */
BLPNP_API blpnp_status blpnp_eval_benchmark(const blpnp_dataset* ds, const blpnp_config* cfg, const char* method,
                                            uint64_t seed, int evaluations, int threads, char** json);

/* OLS slope of log y on log x (n >= 3). residuals may be NULL. */
BLPNP_API blpnp_status blpnp_loglog_slope(const double* x, const double* y, size_t n, double* slope,
                                          double* intercept, double* residuals);

#ifdef __cplusplus
}
#endif

#endif
