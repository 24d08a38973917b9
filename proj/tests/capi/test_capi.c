// Copyright 2026 The stemml Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/* The C interface compiled as C: handles, buffers, status codes and errors. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "stemml/stemml.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

#define EXPECT_OK(call) EXPECT((call) == STEMML_OK)

static void test_config(void) {
  stemml_config* cfg = NULL;
  EXPECT_OK(stemml_config_create(&cfg));
  EXPECT_OK(stemml_config_set(cfg, "umap.n_neighbors", "12"));

  size_t needed = 0;
  EXPECT_OK(stemml_config_get(cfg, "umap.n_neighbors", NULL, 0, &needed));
  EXPECT(needed == 3);
  char small[2];
  EXPECT(stemml_config_get(cfg, "umap.n_neighbors", small, sizeof small, &needed) == STEMML_E_INVALID_ARGUMENT);
  EXPECT(strstr(stemml_last_error(), "too small") != NULL);
  char buf[16];
  EXPECT_OK(stemml_config_get(cfg, "umap.n_neighbors", buf, sizeof buf, &needed));
  EXPECT(strcmp(buf, "12") == 0);

  EXPECT(stemml_config_set(cfg, "umap.bogus", "1") == STEMML_E_INVALID_ARGUMENT);
  EXPECT(strstr(stemml_last_error(), "umap.bogus") != NULL);
  EXPECT(stemml_config_get(cfg, "nope.key", buf, sizeof buf, NULL) == STEMML_E_INVALID_ARGUMENT);

  EXPECT_OK(stemml_config_dump(cfg, NULL, 0, &needed));
  char* text = malloc(needed);
  EXPECT_OK(stemml_config_dump(cfg, text, needed, &needed));
  EXPECT(strstr(text, "[umap]") != NULL);
  EXPECT(strstr(text, "n_neighbors = 12") != NULL);
  free(text);

  EXPECT_OK(stemml_config_set(cfg, "cluster.mode", "spectral"));
  EXPECT_OK(stemml_config_set(cfg, "cluster.auto_k", "true"));
  EXPECT(stemml_config_validate(cfg) != STEMML_OK);
  EXPECT(strstr(stemml_last_error(), "auto_k") != NULL);
  stemml_config_destroy(cfg);
}

static void test_null_handling(void) {
  EXPECT(stemml_config_create(NULL) == STEMML_E_INVALID_ARGUMENT);
  EXPECT(strstr(stemml_last_error(), "out") != NULL);
  EXPECT(stemml_config_set(NULL, "a.b", "1") == STEMML_E_INVALID_ARGUMENT);
  EXPECT(stemml_embedding_shape(NULL, NULL, NULL) == STEMML_E_INVALID_ARGUMENT);
  EXPECT(stemml_dataset_load(NULL, NULL, NULL) == STEMML_E_INVALID_ARGUMENT);
  stemml_dataset* ds = NULL;
  EXPECT(stemml_dataset_load("/nonexistent/x.npy", NULL, &ds) != STEMML_OK);
  EXPECT(ds == NULL);
  EXPECT(stemml_set_log_level(9) == STEMML_E_INVALID_ARGUMENT);
  stemml_config_destroy(NULL);
  stemml_dataset_destroy(NULL);
  stemml_embedding_destroy(NULL);
  EXPECT(strcmp(stemml_status_name(STEMML_E_BUSY), "busy") == 0);
  EXPECT(strcmp(stemml_version(), "0.1.0") == 0);
}

static void test_ari(void) {
  const int32_t a[6] = {0, 0, 1, 1, 2, 2};
  const int32_t b[6] = {5, 5, 7, 7, 9, 9};
  const int32_t c[6] = {0, 1, 0, 1, 0, 1};
  double ari = 0.0;
  EXPECT_OK(stemml_adjusted_rand_index(a, b, 6, 0, &ari));
  EXPECT(ari == 1.0);
  EXPECT_OK(stemml_adjusted_rand_index(a, c, 6, 0, &ari));
  EXPECT(ari < 0.0);
  EXPECT(stemml_adjusted_rand_index(a, b, 6, 0, NULL) == STEMML_E_INVALID_ARGUMENT);
}

static void test_generate_embed_cluster(void) {
  stemml_config* cfg = NULL;
  EXPECT_OK(stemml_config_create(&cfg));
  EXPECT_OK(stemml_config_set(cfg, "run.threads", "1"));
  EXPECT_OK(stemml_config_set(cfg, "synth.ny", "16"));
  EXPECT_OK(stemml_config_set(cfg, "synth.nx", "16"));
  EXPECT_OK(stemml_config_set(cfg, "synth.ky", "32"));
  EXPECT_OK(stemml_config_set(cfg, "synth.kx", "32"));
  EXPECT_OK(stemml_config_set(cfg, "umap.n_neighbors", "15"));
  EXPECT_OK(stemml_config_set(cfg, "cluster.mode", "spectral"));
  EXPECT_OK(stemml_config_set(cfg, "cluster.n_clusters", "7"));

  stemml_dataset* ds = NULL;
  EXPECT_OK(stemml_dataset_generate(cfg, &ds));
  size_t shape[4] = {0, 0, 0, 0};
  EXPECT_OK(stemml_dataset_shape(ds, shape));
  EXPECT(shape[0] == 16 && shape[1] == 16 && shape[2] == 32 && shape[3] == 32);
  const double* values = NULL;
  EXPECT_OK(stemml_dataset_values(ds, &values));
  EXPECT(values != NULL && isfinite(values[0]));

  int32_t truth[256];
  EXPECT(stemml_dataset_truth(ds, truth, 10) == STEMML_E_SHAPE);
  EXPECT_OK(stemml_dataset_truth(ds, truth, 256));

  stemml_embedding* y = NULL;
  EXPECT_OK(stemml_embed(ds, cfg, &y));
  size_t n = 0, d = 0;
  EXPECT_OK(stemml_embedding_shape(y, &n, &d));
  EXPECT(n == 256 && d == 2);

  int32_t labels[256];
  size_t k = 0;
  EXPECT(stemml_cluster(y, cfg, labels, 100, &k) == STEMML_E_SHAPE);
  EXPECT_OK(stemml_cluster(y, cfg, labels, 256, &k));
  EXPECT(k == 7);
  double ari = 0.0;
  EXPECT_OK(stemml_adjusted_rand_index(labels, truth, 256, 0, &ari));
  printf("spectral ARI on the 16x16 scan: %.4f\n", ari);
  EXPECT(ari > 0.5);

  /* A caller-built embedding clusters too. */
  const double* coords = NULL;
  EXPECT_OK(stemml_embedding_coords(y, &coords));
  stemml_embedding* copy = NULL;
  EXPECT_OK(stemml_embedding_create(coords, n, d, &copy));
  int32_t again[256];
  EXPECT_OK(stemml_cluster(copy, cfg, again, 256, NULL));
  EXPECT(memcmp(labels, again, sizeof labels) == 0);
  EXPECT(stemml_embedding_create(NULL, 3, 2, &copy) == STEMML_E_INVALID_ARGUMENT);

  stemml_embedding_destroy(copy);
  stemml_embedding_destroy(y);
  stemml_dataset_destroy(ds);
  stemml_config_destroy(cfg);
}

int main(void) {
  stemml_set_log_level(4);
  test_config();
  test_null_handling();
  test_ari();
  test_generate_embed_cluster();
  if (failures) {
    fprintf(stderr, "%d expectation(s) failed\n", failures);
    return 1;
  }
  puts("ok");
  return 0;
}
