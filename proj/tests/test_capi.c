/* Exercises the C API from C. Exit status is the number of failed checks. */
#include <fbsde/fbsde.h>

#include <math.h>
#include <stdio.h>
#include <string.h>

static int failed = 0;

#define EXPECT(cond)                                              \
  do {                                                            \
    if (!(cond)) {                                                \
      ++failed;                                                   \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond, \
              fbsde_last_error());                                \
    }                                                             \
  } while (0)

int main(void) {
  EXPECT(strlen(fbsde_version()) > 0);
  EXPECT(fbsde_catalog_size() == 4);
  EXPECT(strcmp(fbsde_status_name(FBSDE_ERR_CONFIG), "") != 0);

  fbsde_problem* bad = NULL;
  EXPECT(fbsde_problem_builtin("nope", &bad) == FBSDE_ERR_UNKNOWN_PROBLEM);
  EXPECT(bad == NULL);
  EXPECT(strlen(fbsde_last_error()) > 0);
  EXPECT(fbsde_problem_from_yaml("d: 1\n", &bad) == FBSDE_ERR_CONFIG);

  fbsde_problem* p = NULL;
  EXPECT(fbsde_problem_builtin("linear-ode", &p) == FBSDE_OK);
  fbsde_problem_info info;
  EXPECT(fbsde_problem_get_info(p, &info) == FBSDE_OK);
  EXPECT(info.d == 1 && info.l == 1 && info.has_oracle == 1);
  int pass = 0;
  EXPECT(fbsde_problem_validate(p, 1024, 1, &pass) == FBSDE_OK && pass == 1);
  char* text = NULL;
  EXPECT(fbsde_problem_describe(p, &text) == FBSDE_OK && strstr(text, "linear-ode") != NULL);
  fbsde_string_free(text);

  fbsde_grid grid = fbsde_grid_default();
  EXPECT(grid.Nx == 401);
  grid.Nx = 61;
  grid.Nt = 100;
  fbsde_field* f = NULL;
  EXPECT(fbsde_solve(p, 4, 16, &grid, &f) == FBSDE_OK);
  const double x = 0.0;
  double v = 0.0, exact = 0.0;
  EXPECT(fbsde_field_value(f, 0.0, &x, &v) == FBSDE_OK);
  EXPECT(fbsde_problem_oracle(p, 0.0, &x, &exact) == FBSDE_OK);
  EXPECT(fabs(v - exact) < 2e-3);
  fbsde_apriori ap;
  EXPECT(fbsde_field_apriori(f, &ap) == FBSDE_OK && ap.bound_ok && ap.terminal_exact);

  fbsde_sim_params sp = {500, 50, 3, NULL, 0.0, 1};
  fbsde_ensemble* e = NULL;
  EXPECT(fbsde_simulate(f, &sp, &e) == FBSDE_OK);
  size_t M = 0, N = 0, d = 0, l = 0;
  EXPECT(fbsde_ensemble_shape(e, &M, &N, &d, &l) == FBSDE_OK && M == 500 && N == 50 && d == 1 && l == 1);
  double y = 0.0;
  EXPECT(fbsde_ensemble_y(e, 0, N, &y) == FBSDE_OK && fabs(y - 1.0) < 1e-12);
  EXPECT(fbsde_ensemble_x(e, M, 0, &y) == FBSDE_ERR_INVALID_ARGUMENT);
  double res = 1.0;
  EXPECT(fbsde_bsde_residual(e, 0.0, &res) == FBSDE_OK && res < 2e-2);
  EXPECT(fbsde_terminal_match(e, &res) == FBSDE_OK && res < 1e-12);

  /* The ensemble keeps its field alive. */
  fbsde_field_free(f);
  fbsde_problem_free(p);
  EXPECT(fbsde_ensemble_y(e, 1, 0, &y) == FBSDE_OK);
  fbsde_ensemble_free(e);

  fbsde_config* c = NULL;
  EXPECT(fbsde_config_new(&c) == FBSDE_OK);
  int code = -1;
  EXPECT(fbsde_config_run(c, FBSDE_CMD_VERIFY, &code, NULL, NULL) == FBSDE_OK && code == 2);
  EXPECT(fbsde_config_set(c, "problem", "heat") == FBSDE_OK);
  EXPECT(fbsde_config_set(c, "levels", "4") == FBSDE_OK);
  EXPECT(fbsde_config_set(c, "grid", "6,61,50") == FBSDE_OK);
  EXPECT(fbsde_config_set(c, "paths", "100") == FBSDE_OK);
  EXPECT(fbsde_config_set(c, "steps", "20") == FBSDE_OK);
  EXPECT(fbsde_config_set(c, "no-such-key", "1") == FBSDE_ERR_CONFIG);
  char* hash = NULL;
  EXPECT(fbsde_config_hash(c, &hash) == FBSDE_OK && strlen(hash) == 16);
  fbsde_string_free(hash);
  char* json = NULL;
  EXPECT(fbsde_config_run(c, FBSDE_CMD_VERIFY, &code, NULL, &json) == FBSDE_OK && code == 0);
  EXPECT(json != NULL && strstr(json, "fbsde.level-report/1") != NULL);
  fbsde_string_free(json);
  fbsde_config_free(c);

  printf("%s: %d failure(s)\n", failed ? "FAIL" : "PASS", failed);
  return failed;
}
