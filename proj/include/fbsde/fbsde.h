/* C interface to the FBSDE solver and verification harness.
 *
 * Every function returns an fbsde_status. On failure a message describing
 * the error is available from fbsde_last_error() on the same thread until
 * the next call into the library. Handles are opaque and owned by the
 * caller; free them with the matching *_free function. Strings returned
 * through char** out-parameters are released with fbsde_string_free. */
#ifndef FBSDE_FBSDE_H
#define FBSDE_FBSDE_H

#include <stddef.h>
#include <stdint.h>

#if defined(FBSDE_BUILDING_LIBRARY)
#define FBSDE_API __attribute__((visibility("default")))
#else
#define FBSDE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fbsde_status {
  FBSDE_OK = 0,
  FBSDE_ERR_INVALID_ARGUMENT = 1,
  FBSDE_ERR_UNKNOWN_PROBLEM = 2,
  FBSDE_ERR_CONFIG = 3,
  FBSDE_ERR_IO = 4,
  FBSDE_ERR_INVARIANT = 5,
  FBSDE_ERR_NUMERIC = 6,
  FBSDE_ERR_LINEAR_SOLVE = 7,
  FBSDE_ERR_INTERNAL = 8
} fbsde_status;

typedef struct fbsde_problem fbsde_problem;
typedef struct fbsde_field fbsde_field;
typedef struct fbsde_ensemble fbsde_ensemble;
typedef struct fbsde_config fbsde_config;

FBSDE_API const char* fbsde_version(void);
FBSDE_API const char* fbsde_last_error(void);
FBSDE_API const char* fbsde_status_name(fbsde_status status);
FBSDE_API void fbsde_string_free(char* s);

/* ---- problems ---------------------------------------------------------- */

FBSDE_API size_t fbsde_catalog_size(void);
/* NULL when i is out of range. */
FBSDE_API const char* fbsde_catalog_name(size_t i);

FBSDE_API fbsde_status fbsde_problem_builtin(const char* name, fbsde_problem** out);
/* YAML text of a custom problem; see the README for the format. */
FBSDE_API fbsde_status fbsde_problem_from_yaml(const char* yaml, fbsde_problem** out);
FBSDE_API void fbsde_problem_free(fbsde_problem* p);

typedef struct fbsde_problem_info {
  size_t d;
  size_t l;
  double T;
  double lambda;
  double k1;
  double k2;
  double k3;
  double R;
  int flag_b1;
  int flag_b2;
  int flag_a5;
  int flag_a6;
  int has_oracle;
} fbsde_problem_info;

FBSDE_API fbsde_status fbsde_problem_get_info(const fbsde_problem* p, fbsde_problem_info* out);
/* Text summary: constants, flags, R and the applicable results. */
FBSDE_API fbsde_status fbsde_problem_describe(const fbsde_problem* p, char** out);
/* Shifted-Sobol sampling of the growth inequalities; *pass is 1 or 0. */
FBSDE_API fbsde_status fbsde_problem_validate(const fbsde_problem* p, size_t budget,
                                              uint64_t seed, int* pass);
/* Closed-form v(t, x) (l values); FBSDE_ERR_INVALID_ARGUMENT without oracle. */
FBSDE_API fbsde_status fbsde_problem_oracle(const fbsde_problem* p, double t,
                                            const double* x, double* v);

/* ---- decoupling field --------------------------------------------------- */

typedef struct fbsde_grid {
  double L;  /* box [-L, L]^d */
  size_t Nx; /* nodes per axis, odd */
  size_t Nt; /* time steps */
} fbsde_grid;

FBSDE_API fbsde_grid fbsde_grid_default(void);

/* Mollifies at level n (bandwidth 1/n) with the given Gauss-Legendre order
 * per axis and solves the decoupling-field PDE on the grid. */
FBSDE_API fbsde_status fbsde_solve(const fbsde_problem* p, int level, int quad_order,
                                   const fbsde_grid* grid, fbsde_field** out);
FBSDE_API void fbsde_field_free(fbsde_field* f);

/* v(t, x): l values. */
FBSDE_API fbsde_status fbsde_field_value(const fbsde_field* f, double t, const double* x,
                                         double* v);
/* D_x v(t, x): l*d values, row-major (component, axis). */
FBSDE_API fbsde_status fbsde_field_gradient(const fbsde_field* f, double t, const double* x,
                                            double* w);

typedef struct fbsde_apriori {
  double sup_v;
  double R;
  int bound_ok;       /* sup_v <= R (1 + 1e-6) */
  int terminal_exact; /* last layer equals h_n bit for bit */
  double holder_alpha;
  double holder_c;
} fbsde_apriori;

FBSDE_API fbsde_status fbsde_field_apriori(const fbsde_field* f, fbsde_apriori* out);
FBSDE_API fbsde_status fbsde_field_write_csv(const fbsde_field* f, const char* path);

/* ---- forward paths ------------------------------------------------------ */

typedef struct fbsde_sim_params {
  size_t paths;
  size_t steps;
  uint64_t seed;
  const double* x0; /* d values; NULL for the origin */
  double s;         /* start time */
  size_t jobs;      /* worker threads, 0 for all cores */
} fbsde_sim_params;

/* Euler-Maruyama paths of the forward SDE with Y and Z reconstructed from
 * the field. */
FBSDE_API fbsde_status fbsde_simulate(const fbsde_field* f, const fbsde_sim_params* params,
                                      fbsde_ensemble** out);
FBSDE_API void fbsde_ensemble_free(fbsde_ensemble* e);

FBSDE_API fbsde_status fbsde_ensemble_shape(const fbsde_ensemble* e, size_t* M, size_t* N,
                                            size_t* d, size_t* l);
/* X, Y, Z of path m at step i (d, l and l*d values). */
FBSDE_API fbsde_status fbsde_ensemble_x(const fbsde_ensemble* e, size_t m, size_t i, double* out);
FBSDE_API fbsde_status fbsde_ensemble_y(const fbsde_ensemble* e, size_t m, size_t i, double* out);
FBSDE_API fbsde_status fbsde_ensemble_z(const fbsde_ensemble* e, size_t m, size_t i, double* out);

typedef struct fbsde_ensemble_stats {
  double exit_fraction;
  double max_drift;
  double drift_bound;
} fbsde_ensemble_stats;

FBSDE_API fbsde_status fbsde_ensemble_get_stats(const fbsde_ensemble* e, fbsde_ensemble_stats* out);
FBSDE_API fbsde_status fbsde_ensemble_write_csv(const fbsde_ensemble* e, const char* path);
/* RMS of the discrete backward equation over [s, T - delta]. */
FBSDE_API fbsde_status fbsde_bsde_residual(const fbsde_ensemble* e, double delta, double* out);
/* RMS of Y_T - h(X_T) with the unmollified h. */
FBSDE_API fbsde_status fbsde_terminal_match(const fbsde_ensemble* e, double* out);

/* ---- run configurations -------------------------------------------------- */

FBSDE_API fbsde_status fbsde_config_new(fbsde_config** out);
FBSDE_API fbsde_status fbsde_config_load(const char* path, fbsde_config** out);
FBSDE_API fbsde_status fbsde_config_parse(const char* yaml, fbsde_config** out);
FBSDE_API void fbsde_config_free(fbsde_config* c);

/* Keys: problem, custom-file, levels, grid (L,Nx,Nt), deltas, paths, steps,
 * seed, x0, s, checks, output, jobs, moll-quad-order. */
FBSDE_API fbsde_status fbsde_config_set(fbsde_config* c, const char* key, const char* value);
/* Output directory after applying the FBSDE_OUTPUT_ROOT override. */
FBSDE_API fbsde_status fbsde_config_output_dir(const fbsde_config* c, char** out);
/* FNV-1a hash of the canonical config (after validation). */
FBSDE_API fbsde_status fbsde_config_hash(const fbsde_config* c, char** out);

typedef enum fbsde_command {
  FBSDE_CMD_SOLVE = 0,    /* field_n.csv per level */
  FBSDE_CMD_SIMULATE = 1, /* field_n.csv and ensemble_n.csv per level */
  FBSDE_CMD_VERIFY = 2,   /* checks only, no files */
  FBSDE_CMD_PIPELINE = 3  /* all files plus convergence.json */
} fbsde_command;

/* Runs a command. *exit_code follows the CLI convention: 0 ok, 1 hard
 * invariant failure, 2 config error, 3 I/O error. text and json may be NULL;
 * otherwise they receive a human summary and the JSON reports. The return
 * status is FBSDE_OK whenever the run completed far enough to set
 * *exit_code. */
FBSDE_API fbsde_status fbsde_config_run(const fbsde_config* c, fbsde_command cmd,
                                        int* exit_code, char** text, char** json);

#ifdef __cplusplus
}
#endif

#endif
