/* Exercises libsde strictly through the public C header. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "sde/sde.h"

static int g_failures = 0;

#define EXPECT(cond)                                                     \
  do {                                                                   \
    if (!(cond)) {                                                       \
      ++g_failures;                                                      \
      fprintf(stderr, "FAIL %s:%d: %s\n", __FILE__, __LINE__, #cond);    \
    }                                                                    \
  } while (0)

static void write_file(const char* path, const char* text) {
  FILE* f = fopen(path, "wb");
  EXPECT(f != NULL);
  if (f) {
    fputs(text, f);
    fclose(f);
  }
}

static void test_version_and_errors(void) {
  EXPECT(sde_version() != NULL);
  EXPECT(strlen(sde_version()) > 0);
  EXPECT(sde_build_id() != NULL);
  EXPECT(sde_last_error() != NULL);
}

static void test_models(void) {
  sde_model* m = NULL;
  EXPECT(sde_model_create("loglog", &m) == SDE_OK);
  EXPECT(m != NULL);
  EXPECT(sde_model_dim_state(m) == 1);
  EXPECT(sde_model_dim_noise(m) == 1);

  double x = 1.0, b = -1.0, s = -1.0;
  EXPECT(sde_model_eval(m, &x, &b, &s) == SDE_OK);
  EXPECT(b == 0.0); /* 1 is an exact zero of both coefficients */
  EXPECT(s == 0.0);
  x = 0.0;
  EXPECT(sde_model_eval(m, &x, &b, &s) == SDE_OK);
  EXPECT(b == 0.0);
  EXPECT(s == 0.0);
  x = 4.0;
  EXPECT(sde_model_eval(m, &x, &b, NULL) == SDE_OK);
  EXPECT(b > 0.0);

  sde_model* t = NULL;
  EXPECT(sde_model_truncate(m, 2.0, "clamp", &t) == SDE_OK);
  EXPECT(t != NULL);
  EXPECT(sde_model_truncate(m, 2.0, "sideways", &t) == SDE_ERR_CONFIG);
  EXPECT(sde_model_truncate(m, -1.0, "clamp", &t) == SDE_ERR_CONFIG);
  sde_model_free(t);

  sde_model* bad = NULL;
  EXPECT(sde_model_create("warp-core", &bad) == SDE_ERR_CONFIG);
  EXPECT(bad == NULL);
  EXPECT(strlen(sde_last_error()) > 0);
  EXPECT(sde_model_create(NULL, &bad) == SDE_ERR_CONFIG);

  sde_model_free(m);
  sde_model_free(NULL); /* must be a no-op */
}

static void test_paths(void) {
  sde_path* p = NULL;
  EXPECT(sde_path_sample(7, 3, 1.0, 3, 1, &p) == SDE_OK);
  EXPECT(p != NULL);
  EXPECT(sde_path_level(p) == 3);
  EXPECT(sde_path_points(p) == 9);
  const double* v = sde_path_values(p);
  EXPECT(v != NULL);
  EXPECT(v[0] == 0.0);

  double coarse[9];
  memcpy(coarse, v, sizeof coarse);
  EXPECT(sde_path_refine(p) == SDE_OK);
  EXPECT(sde_path_level(p) == 4);
  EXPECT(sde_path_points(p) == 17);
  v = sde_path_values(p);
  {
    int k;
    for (k = 0; k < 9; ++k) EXPECT(v[2 * k] == coarse[k]);
  }

  EXPECT(sde_path_dump(p, "capi_path.bin") == SDE_OK);
  EXPECT(sde_path_dump(p, "no_such_dir/capi_path.bin") == SDE_ERR_IO);
  EXPECT(sde_path_sample(7, 3, 1.0, 42, 1, &p) == SDE_ERR_CONFIG);
  EXPECT(sde_path_refine(NULL) == SDE_ERR_CONFIG);
  sde_path_free(p);
  sde_path_free(NULL);
  remove("capi_path.bin");
}

static void test_simulation(void) {
  sde_model* m = NULL;
  sde_path* p = NULL;
  sde_trajectory* t = NULL;
  EXPECT(sde_model_create("loglog", &m) == SDE_OK);
  EXPECT(sde_path_sample(11, 0, 1.0, 6, 1, &p) == SDE_OK);
  double x0 = 1.0; /* exact fixed point: the whole trajectory stays at 1 */
  EXPECT(sde_simulate(m, p, &x0, 1.0, 1e6, &t) == SDE_OK);
  EXPECT(t != NULL);
  EXPECT(sde_trajectory_points(t) == 65);
  EXPECT(sde_trajectory_invalid(t) == 0);
  EXPECT(sde_trajectory_exit_index(t) == -1);
  {
    const double* v = sde_trajectory_values(t);
    int k;
    EXPECT(v != NULL);
    for (k = 0; k < 65; ++k) EXPECT(v[k] == 1.0);
  }
  EXPECT(sde_simulate(m, p, NULL, 1.0, 1e6, &t) == SDE_ERR_CONFIG);
  sde_trajectory_free(t);
  sde_trajectory_free(NULL);
  sde_path_free(p);
  sde_model_free(m);
}

static void test_rate(void) {
  sde_model* m = NULL;
  double value = -1.0, residual = -1.0;
  int converged = 0;
  EXPECT(sde_model_create("linear:0,1", &m) == SDE_OK);
  EXPECT(sde_rate_endpoint(m, 0.0, 1.0, 1.0, 6, 0.0, &value, &residual,
                           &converged) == SDE_OK);
  EXPECT(converged == 1);
  EXPECT(value > 0.49);
  EXPECT(value < 0.51);
  EXPECT(residual <= 1e-4);
  EXPECT(sde_rate_endpoint(NULL, 0.0, 1.0, 1.0, 6, 0.0, &value, &residual,
                           &converged) == SDE_ERR_CONFIG);
  sde_model_free(m);
}

static void test_config_runs(void) {
  char* manifest = NULL;
  EXPECT(sde_run_config_text(
             "{\"kind\":\"simulate\",\"model\":\"loglog\",\"seed\":5,"
             "\"n\":5,\"T\":1,\"x0\":1}",
             "capi_out", -1, 0, &manifest) == SDE_OK);
  EXPECT(manifest != NULL);
  if (manifest) {
    EXPECT(strstr(manifest, "\"kind\": \"simulate\"") != NULL);
    EXPECT(strstr(manifest, "\"x_T\": 1.0") != NULL);
    sde_string_free(manifest);
  }

  manifest = NULL;
  EXPECT(sde_run_config_text(
             "{\"kind\":\"simulate\",\"model\":\"loglog\",\"n\":5,"
             "\"T\":1,\"x0\":1}",
             "capi_out", -1, 0, &manifest) == SDE_ERR_CONFIG);
  EXPECT(manifest == NULL);
  EXPECT(strstr(sde_last_error(), "seed") != NULL);
  EXPECT(sde_run_config_text(NULL, NULL, -1, 0, NULL) == SDE_ERR_CONFIG);
  EXPECT(sde_run_config_file("no_such_config.json", NULL, -1, 0, NULL) ==
         SDE_ERR_IO);
}

static void test_suites(void) {
  write_file("capi_suite_pass.json",
             "{\"cases\":[{\"name\":\"pin\",\"config\":{\"kind\":\"simulate\","
             "\"model\":\"loglog\",\"seed\":9,\"n\":5,\"T\":1,\"x0\":1},"
             "\"assertions\":[{\"field\":\"x_T\",\"op\":\"==\",\"value\":1}]}]}");
  write_file("capi_suite_fail.json",
             "{\"cases\":[{\"name\":\"pin\",\"config\":{\"kind\":\"simulate\","
             "\"model\":\"loglog\",\"seed\":9,\"n\":5,\"T\":1,\"x0\":1},"
             "\"assertions\":[{\"field\":\"x_T\",\"op\":\">\",\"value\":2}]}]}");

  char* report = NULL;
  int all = -1;
  EXPECT(sde_check_suite_file("capi_suite_pass.json", "capi_out_suite", -1, 0,
                              &report, &all) == SDE_OK);
  EXPECT(all == 1);
  EXPECT(report != NULL);
  if (report) {
    EXPECT(strstr(report, "[PASS]") != NULL);
    EXPECT(strstr(report, "[FAIL]") == NULL);
    sde_string_free(report);
  }

  report = NULL;
  all = -1;
  EXPECT(sde_check_suite_file("capi_suite_fail.json", "capi_out_suite", -1, 0,
                              &report, &all) == SDE_ERR_THRESHOLD);
  EXPECT(all == 0);
  EXPECT(report != NULL);
  if (report) {
    EXPECT(strstr(report, "[FAIL]") != NULL);
    sde_string_free(report);
  }
  EXPECT(sde_check_suite_file(NULL, NULL, -1, 0, NULL, NULL) ==
         SDE_ERR_CONFIG);
  remove("capi_suite_pass.json");
  remove("capi_suite_fail.json");
}

int main(void) {
  test_version_and_errors();
  test_models();
  test_paths();
  test_simulation();
  test_rate();
  test_config_runs();
  test_suites();
  if (g_failures > 0) {
    fprintf(stderr, "%d C API expectation(s) failed\n", g_failures);
    return 1;
  }
  printf("all C API expectations passed\n");
  return 0;
}
