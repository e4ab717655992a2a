/*
 * Copyright 2026 The aknn Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance
 * with the License. You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software distributed under the License
 * is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
 * or implied. See the License for the specific language governing permissions and limitations under the License.
 */

#ifndef AKNN_AKNN_H_
#define AKNN_AKNN_H_

#include <stddef.h>
#include <stdint.h>

#if defined(AKNN_BUILDING_LIBRARY)
#define AKNN_API __attribute__((visibility("default")))
#else
#define AKNN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum aknn_status {
    AKNN_OK = 0,
    AKNN_INVALID_ARGUMENT = 1,
    AKNN_DIMENSION_MISMATCH = 2,
    AKNN_OUT_OF_RANGE = 3,
    AKNN_IO = 4,
    AKNN_CORRUPT = 5,
    AKNN_NUMERIC = 6,
    AKNN_SHAPE_MISMATCH = 7,
    AKNN_INTERNAL = 100
} aknn_status;

typedef enum aknn_metric { AKNN_SQUARED_L2 = 0, AKNN_L2 = 1 } aknn_metric;

typedef struct aknn_datastore aknn_datastore;
typedef struct aknn_ivf aknn_ivf;
typedef struct aknn_metak aknn_metak;
typedef struct aknn_config aknn_config;

/* Message of the last failed call on this thread; "" if none. */
AKNN_API const char* aknn_last_error(void);
AKNN_API const char* aknn_status_name(aknn_status status);
AKNN_API const char* aknn_version(void);

/* Datastore. keys is row-major, n * dim floats. */
AKNN_API aknn_status aknn_datastore_create(uint32_t dim, uint32_t vocab_size, const float* keys,
                                           const uint32_t* values, uint64_t n, aknn_datastore** out);
AKNN_API aknn_status aknn_datastore_load(const char* path, aknn_datastore** out);
AKNN_API aknn_status aknn_datastore_save(const aknn_datastore* ds, const char* path);
AKNN_API void aknn_datastore_free(aknn_datastore* ds);
AKNN_API uint64_t aknn_datastore_size(const aknn_datastore* ds);
AKNN_API uint32_t aknn_datastore_dim(const aknn_datastore* ds);
AKNN_API uint32_t aknn_datastore_vocab_size(const aknn_datastore* ds);

/* Writes k results, nearest first. Any output pointer may be NULL. */
AKNN_API aknn_status aknn_exact_search(const aknn_datastore* ds, const float* query, size_t k, aknn_metric metric,
                                       uint64_t* indices, uint32_t* values, double* distances);

/* IVF index bound to the datastore it was trained on. */
AKNN_API aknn_status aknn_ivf_train(const aknn_datastore* ds, size_t n_centroids, size_t n_iters, uint64_t seed,
                                    aknn_ivf** out);
AKNN_API aknn_status aknn_ivf_load(const char* path, aknn_ivf** out);
AKNN_API aknn_status aknn_ivf_save(const aknn_ivf* index, const char* path);
AKNN_API void aknn_ivf_free(aknn_ivf* index);
AKNN_API size_t aknn_ivf_n_centroids(const aknn_ivf* index);
/* Up to k results; *found receives how many were written. */
AKNN_API aknn_status aknn_ivf_search(const aknn_ivf* index, const aknn_datastore* ds, const float* query, size_t k,
                                     size_t nprobe, aknn_metric metric, uint64_t* indices, uint32_t* values,
                                     double* distances, size_t* found);

/* kNN distribution over vocab_size tokens from n retrieved neighbors. */
AKNN_API aknn_status aknn_knn_distribution(const double* distances, const uint32_t* values, size_t n,
                                           double temperature, uint32_t vocab_size, double* out);

/* Meta-k network. */
AKNN_API aknn_status aknn_metak_load(const char* path, aknn_metak** out);
AKNN_API aknn_status aknn_metak_save(const aknn_metak* model, const char* path);
AKNN_API void aknn_metak_free(aknn_metak* model);
AKNN_API size_t aknn_metak_max_k(const aknn_metak* model);
/* Number of k choices, log2(max_k) + 2. */
AKNN_API size_t aknn_metak_n_choices(const aknn_metak* model);
/* features: 2 * max_k values; out: n_choices probabilities. */
AKNN_API aknn_status aknn_metak_forward(const aknn_metak* model, const double* features, double* out);

/* Configuration: INI-style text, keys addressed as "section.key". */
AKNN_API aknn_status aknn_config_new(aknn_config** out);
AKNN_API aknn_status aknn_config_load(const char* path, aknn_config** out);
AKNN_API aknn_status aknn_config_parse(const char* text, aknn_config** out);
AKNN_API void aknn_config_free(aknn_config* config);
AKNN_API aknn_status aknn_config_set(aknn_config* config, const char* key, const char* value);
/* "section.key=value". */
AKNN_API aknn_status aknn_config_override(aknn_config* config, const char* assignment);
/* Every recognized key with its default ("" when it has none). */
AKNN_API size_t aknn_config_key_count(void);
AKNN_API const char* aknn_config_key(size_t i);
AKNN_API const char* aknn_config_default(size_t i);

/* Pipeline commands. */
typedef void (*aknn_write_fn)(const char* text, size_t len, void* user);

AKNN_API size_t aknn_command_count(void);
AKNN_API const char* aknn_command_name(size_t i);
AKNN_API const char* aknn_command_summary(size_t i);
/* Output text is passed to sink (if not NULL) as it is produced. */
AKNN_API aknn_status aknn_command_run(const char* name, const aknn_config* config, aknn_write_fn sink, void* user);

#ifdef __cplusplus
}
#endif

#endif
