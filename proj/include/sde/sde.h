/* C interface to the SDE toolkit. All functions return sde_status unless
 * noted; on failure sde_last_error() gives a one-line message for the
 * calling thread. Exit codes used by the CLI match these status values. */
#ifndef SDE_SDE_H
#define SDE_SDE_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sde_status {
  SDE_OK = 0,
  SDE_ERR_INTERNAL = 1,
  SDE_ERR_CONFIG = 2,    /* invalid config / bad argument */
  SDE_ERR_NUMERICAL = 3, /* simulation or optimization failure */
  SDE_ERR_THRESHOLD = 4, /* acceptance assertion failed (check mode) */
  SDE_ERR_IO = 5
} sde_status;

const char* sde_version(void);
const char* sde_build_id(void);
const char* sde_last_error(void); /* thread-local, valid until next call */

/* ---- coefficient models ---- */

typedef struct sde_model sde_model;

/* spec: "loglog" | "alphabeta:a,b" | "linear:a,s" */
sde_status sde_model_create(const char* spec, sde_model** out);
/* mode: "clamp" | "cutoff" */
sde_status sde_model_truncate(const sde_model* m, double radius,
                              const char* mode, sde_model** out);
void sde_model_free(sde_model* m);
int sde_model_dim_state(const sde_model* m);
int sde_model_dim_noise(const sde_model* m);
/* drift_out: d values; diffusion_out: d*m row-major; either may be NULL */
sde_status sde_model_eval(const sde_model* m, const double* x,
                          double* drift_out, double* diffusion_out);

/* ---- Brownian paths ---- */

typedef struct sde_path sde_path;

sde_status sde_path_sample(uint64_t master_seed, uint64_t stream_id, double T,
                           int level, int m, sde_path** out);
sde_status sde_path_refine(sde_path* p);
void sde_path_free(sde_path* p);
int sde_path_level(const sde_path* p);
int64_t sde_path_points(const sde_path* p);   /* grid points = steps + 1 */
const double* sde_path_values(const sde_path* p); /* points x m row-major */
sde_status sde_path_dump(const sde_path* p, const char* file);

/* ---- trajectories ---- */

typedef struct sde_trajectory sde_trajectory;

sde_status sde_simulate(const sde_model* m, const sde_path* p,
                        const double* x0, double epsilon, double n_trunc,
                        sde_trajectory** out);
void sde_trajectory_free(sde_trajectory* t);
int64_t sde_trajectory_points(const sde_trajectory* t);
const double* sde_trajectory_values(const sde_trajectory* t);
int64_t sde_trajectory_exit_index(const sde_trajectory* t); /* -1: none */
int sde_trajectory_invalid(const sde_trajectory* t);

/* ---- rate-function optimization ---- */

sde_status sde_rate_endpoint(const sde_model* m, double x0, double y,
                             double T, int level, double tol,
                             double* value_out, double* residual_out,
                             int* converged_out);

/* ---- experiment driver ---- */

/* out_override: NULL or "" keeps the config's directory; seed_override < 0
 * and workers_override <= 0 mean no override. manifest_json_out (optional)
 * receives a malloc'd copy of the run manifest; free with sde_string_free. */
sde_status sde_run_config_file(const char* path, const char* out_override,
                               long long seed_override, int workers_override,
                               char** manifest_json_out);
sde_status sde_run_config_text(const char* json, const char* out_override,
                               long long seed_override, int workers_override,
                               char** manifest_json_out);

/* report_out (optional) receives the printable assertion table. Returns
 * SDE_OK when every assertion passes, SDE_ERR_THRESHOLD otherwise. */
sde_status sde_check_suite_file(const char* path, const char* out_override,
                                long long seed_override, int workers_override,
                                char** report_out, int* all_passed_out);

void sde_string_free(char* s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SDE_SDE_H */
