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

/* C interface to stemml: opaque handles, status codes, caller-owned buffers.
 *
 * Every function except the destroy functions returns a stemml_status. On
 * failure the message is available from stemml_last_error() on the calling
 * thread until the next failing call on that thread. Handles are not
 * synchronized; share one handle across threads only for reads.
 */
#ifndef STEMML_H
#define STEMML_H

#include <stddef.h>
#include <stdint.h>

#if defined(STEMML_BUILDING)
#define STEMML_API __attribute__((visibility("default")))
#else
#define STEMML_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum stemml_status {
  STEMML_OK = 0,
  STEMML_E_INVALID_ARGUMENT = 1,
  STEMML_E_IO = 2,
  STEMML_E_FORMAT = 3,
  STEMML_E_SHAPE = 4,
  STEMML_E_VALIDATION = 5,
  STEMML_E_NOT_FOUND = 6,
  STEMML_E_NUMERICAL = 7,
  STEMML_E_BUSY = 8,
  STEMML_E_INTERNAL = 9
} stemml_status;

typedef enum stemml_stage {
  STEMML_STAGE_GENERATE = 0,
  STEMML_STAGE_EMBED = 1,
  STEMML_STAGE_BOOTSTRAP = 2,
  STEMML_STAGE_CLUSTER = 3,
  STEMML_STAGE_ANALYZE = 4,
  STEMML_STAGE_STABILITY = 5,
  STEMML_STAGE_PIPELINE = 6
} stemml_stage;

typedef struct stemml_config stemml_config;
typedef struct stemml_dataset stemml_dataset;
typedef struct stemml_embedding stemml_embedding;

STEMML_API const char* stemml_version(void);
/* Never NULL; empty when the thread has not seen a failure. */
STEMML_API const char* stemml_last_error(void);
STEMML_API const char* stemml_status_name(stemml_status status);
/* 0 trace .. 6 off. */
STEMML_API stemml_status stemml_set_log_level(int level);

/* Run configuration. Keys are "section.key" as in the INI config file. */
STEMML_API stemml_status stemml_config_create(stemml_config** out);
STEMML_API stemml_status stemml_config_load(const char* path, stemml_config** out);
STEMML_API void stemml_config_destroy(stemml_config* config);
STEMML_API stemml_status stemml_config_set(stemml_config* config, const char* key, const char* value);
/* Copies the value with a terminating NUL into buf when it fits; *needed
 * receives the size including the NUL. buf may be NULL when capacity is 0. */
STEMML_API stemml_status stemml_config_get(const stemml_config* config, const char* key, char* buf, size_t capacity,
                                           size_t* needed);
/* Whole config as INI text, same buffer convention as stemml_config_get. */
STEMML_API stemml_status stemml_config_dump(const stemml_config* config, char* buf, size_t capacity, size_t* needed);
STEMML_API stemml_status stemml_config_validate(const stemml_config* config);

/* Pipeline stages on the run directory named by run.outdir. */
STEMML_API stemml_status stemml_run_stage(const stemml_config* config, stemml_stage stage);
/* Blocks serving the explorer API for a finished run directory. static_dir may be NULL. */
STEMML_API stemml_status stemml_serve(const char* run_dir, int port, const char* static_dir);

/* 4D datasets, axes (scan-y, scan-x, detector-y, detector-x). */
STEMML_API stemml_status stemml_dataset_load(const char* path, const char* axes, stemml_dataset** out);
/* Synthetic dataset from the synth.* and run.seed keys of config. */
STEMML_API stemml_status stemml_dataset_generate(const stemml_config* config, stemml_dataset** out);
STEMML_API void stemml_dataset_destroy(stemml_dataset* dataset);
STEMML_API stemml_status stemml_dataset_shape(const stemml_dataset* dataset, size_t shape[4]);
/* Row-major values, valid for the lifetime of the handle. */
STEMML_API stemml_status stemml_dataset_values(const stemml_dataset* dataset, const double** values);
/* Ground-truth class per scan pixel (synthetic datasets only). */
STEMML_API stemml_status stemml_dataset_truth(const stemml_dataset* dataset, int32_t* classes, size_t count);

/* Embedding of a dataset with the umap.* keys and run.seed of config. */
STEMML_API stemml_status stemml_embed(const stemml_dataset* dataset, const stemml_config* config, stemml_embedding** out);
STEMML_API stemml_status stemml_embedding_create(const double* coords, size_t n, size_t d, stemml_embedding** out);
STEMML_API void stemml_embedding_destroy(stemml_embedding* embedding);
STEMML_API stemml_status stemml_embedding_shape(const stemml_embedding* embedding, size_t* n, size_t* d);
STEMML_API stemml_status stemml_embedding_coords(const stemml_embedding* embedding, const double** coords);

/* Labels (-1 noise) under the cluster.* keys of config. count must equal n. */
STEMML_API stemml_status stemml_cluster(const stemml_embedding* embedding, const stemml_config* config, int32_t* labels,
                                        size_t count, size_t* n_clusters);
STEMML_API stemml_status stemml_adjusted_rand_index(const int32_t* a, const int32_t* b, size_t count, int exclude_noise,
                                                    double* out);

#ifdef __cplusplus
}
#endif

#endif /* STEMML_H */
