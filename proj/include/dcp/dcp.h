/*
 * Copyright 2026 The dcp Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/*
 * C interface to the dcp library. All objects are opaque handles created and
 * destroyed through this header. Every fallible call returns a dcp_status;
 * on failure dcp_last_error_message() describes the error for the calling
 * thread. Strings returned through `char**` out-parameters are owned by the
 * caller and released with dcp_string_free().
 */

#ifndef DCP_DCP_H_
#define DCP_DCP_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(DCP_BUILDING_LIBRARY)
#    define DCP_API __declspec(dllexport)
#  else
#    define DCP_API __declspec(dllimport)
#  endif
#else
#  define DCP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dcp_status {
  DCP_OK = 0,
  DCP_ERROR_CONFIG = 1,
  DCP_ERROR_INPUT = 2,
  DCP_ERROR_NUMERIC = 3,
  DCP_ERROR_CALIBRATION = 4, /* policy pruned the whole calibration set */
  DCP_ERROR_IO = 5,
  DCP_ERROR_NOT_FOUND = 6,
  DCP_ERROR_CONFLICT = 7,
  DCP_ERROR_INTERNAL = 99
} dcp_status;

typedef struct dcp_config dcp_config;
typedef struct dcp_dataset dcp_dataset;
typedef struct dcp_model dcp_model;
typedef struct dcp_calibration dcp_calibration;
typedef struct dcp_session_store dcp_session_store;

DCP_API const char* dcp_version(void);
DCP_API const char* dcp_last_error_message(void);
/* Realized calibration deferral rate of the last DCP_ERROR_CALIBRATION. */
DCP_API double dcp_last_error_deferral_rate(void);
/* Path involved in the last DCP_ERROR_IO, or "". */
DCP_API const char* dcp_last_error_path(void);
DCP_API void dcp_string_free(char* s);

/* ---- experiment configuration (plain-text key = value) ---- */
DCP_API dcp_status dcp_config_create(dcp_config** out);
DCP_API dcp_status dcp_config_parse(const char* text, dcp_config** out);
DCP_API dcp_status dcp_config_load(const char* path, dcp_config** out);
DCP_API dcp_status dcp_config_set(dcp_config* config, const char* key,
                                  const char* value);
DCP_API dcp_status dcp_config_format(const dcp_config* config, char** out);
DCP_API void dcp_config_free(dcp_config* config);

/* ---- datasets ---- */
DCP_API dcp_status dcp_dataset_sample_mog(size_t n, double variance,
                                          uint64_t seed, dcp_dataset** out);
DCP_API dcp_status dcp_dataset_load_csv(const char* path, dcp_dataset** out);
DCP_API dcp_status dcp_dataset_save_csv(const dcp_dataset* data,
                                        const char* path);
DCP_API size_t dcp_dataset_size(const dcp_dataset* data);
DCP_API size_t dcp_dataset_dim(const dcp_dataset* data);
DCP_API dcp_status dcp_dataset_example(const dcp_dataset* data, size_t index,
                                       double* features, size_t capacity,
                                       size_t* label);
DCP_API void dcp_dataset_free(dcp_dataset* data);

/* ---- models ---- */
DCP_API dcp_status dcp_model_create(const size_t* layer_sizes, size_t count,
                                    uint64_t seed, dcp_model** out);
/* Trains with the deferral loss; expert flags come from the config's
 * expert_accuracy and seed. `final_loss` may be NULL. */
DCP_API dcp_status dcp_model_train(dcp_model* model, const dcp_dataset* data,
                                   const dcp_config* config, double* final_loss);
DCP_API dcp_status dcp_model_forward(const dcp_model* model,
                                     const double* features, size_t dim,
                                     double* logits, size_t capacity);
DCP_API size_t dcp_model_output_dim(const dcp_model* model);
DCP_API dcp_status dcp_model_load(const char* path, dcp_model** out);
DCP_API dcp_status dcp_model_save(const dcp_model* model, const char* path);
DCP_API void dcp_model_free(dcp_model* model);

/* ---- calibration ---- */
DCP_API dcp_status dcp_calibrate(const dcp_model* model, const dcp_dataset* cal,
                                 const dcp_config* config,
                                 dcp_calibration** out);
/* tau_cal of the non-deferred slice; -inf when every label is admitted. */
DCP_API double dcp_calibration_tau(const dcp_calibration* calibration);
DCP_API double dcp_calibration_baseline_tau(const dcp_calibration* calibration);
DCP_API size_t dcp_calibration_n(const dcp_calibration* calibration);
DCP_API double dcp_calibration_deferral_rate(const dcp_calibration* calibration);
DCP_API dcp_status dcp_calibration_load(const char* path, dcp_calibration** out);
DCP_API dcp_status dcp_calibration_save(const dcp_calibration* calibration,
                                        const char* path);
DCP_API void dcp_calibration_free(dcp_calibration* calibration);

/* ---- evaluation and experiments ---- */
/* Routes `val`; writes the report JSON and the routing artifact served by
 * the session API. Either out-parameter may be NULL. */
DCP_API dcp_status dcp_evaluate(const dcp_model* model,
                                const dcp_calibration* calibration,
                                const dcp_dataset* val, const dcp_config* config,
                                char** report_json, char** routing_json);
DCP_API dcp_status dcp_run_sweep(const dcp_config* config, char** json,
                                 char** csv);
DCP_API dcp_status dcp_run_coverage(const dcp_config* config, size_t trials,
                                    char** json);

/* ---- operator sessions ---- */
DCP_API dcp_status dcp_session_store_create(const char* routing_json,
                                            const char* log_path,
                                            dcp_session_store** out);
DCP_API size_t dcp_session_store_items(const dcp_session_store* store);
DCP_API dcp_status dcp_session_open(dcp_session_store* store, char** json);
DCP_API dcp_status dcp_session_next(dcp_session_store* store, const char* id,
                                    char** json);
DCP_API dcp_status dcp_session_answer(dcp_session_store* store, const char* id,
                                      const char* body, char** json);
DCP_API dcp_status dcp_session_stats(dcp_session_store* store, const char* id,
                                     char** json);
DCP_API void dcp_session_store_free(dcp_session_store* store);

#ifdef __cplusplus
}
#endif

#endif /* DCP_DCP_H_ */
