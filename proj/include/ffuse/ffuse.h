// Copyright 2026 The ffuse Authors
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

/*
 * ffuse: differentiable fusion of paired feature streams with a
 * thresholded cross-correlation decorrelation loss.
 *
 * C interface over the C++ core. Objects are opaque handles owned by the
 * caller and released with the matching *_destroy function. Every fallible
 * call returns an ffuse_status; on failure ffuse_last_error() describes the
 * problem for the calling thread until its next failing call.
 */
#ifndef FFUSE_FFUSE_H_
#define FFUSE_FFUSE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(FFUSE_BUILDING_LIBRARY)
#    define FFUSE_API __declspec(dllexport)
#  else
#    define FFUSE_API __declspec(dllimport)
#  endif
#elif defined(__GNUC__) && __GNUC__ >= 4
#  define FFUSE_API __attribute__((visibility("default")))
#else
#  define FFUSE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ffuse_status {
  FFUSE_OK = 0,
  FFUSE_ERR_INVALID_ARGUMENT = 1,
  FFUSE_ERR_SHAPE = 2,
  FFUSE_ERR_NON_FINITE = 3,
  FFUSE_ERR_IO = 4,
  FFUSE_ERR_FORMAT = 5,
  FFUSE_ERR_DIVERGED = 6,
  FFUSE_ERR_BUFFER_TOO_SMALL = 7,
  FFUSE_ERR_INTERNAL = 8
} ffuse_status;

FFUSE_API const char* ffuse_last_error(void);
FFUSE_API const char* ffuse_status_name(ffuse_status status);
FFUSE_API const char* ffuse_version(void);

/* ---- feature streams --------------------------------------------------- */

typedef struct ffuse_features ffuse_features;

typedef enum ffuse_downsample_mode {
  FFUSE_DOWNSAMPLE_AVERAGE = 0,
  FFUSE_DOWNSAMPLE_STRIDE = 1
} ffuse_downsample_mode;

/* data is frames x dims, row-major. */
FFUSE_API ffuse_status ffuse_features_create(const double* data, uint32_t frames,
                                             uint32_t dims, double stride_ms,
                                             ffuse_features** out);
FFUSE_API ffuse_status ffuse_features_read(const char* path, ffuse_features** out);
FFUSE_API ffuse_status ffuse_features_write(const ffuse_features* f, const char* path);
FFUSE_API void ffuse_features_destroy(ffuse_features* f);

FFUSE_API uint32_t ffuse_features_frames(const ffuse_features* f);
FFUSE_API uint32_t ffuse_features_dims(const ffuse_features* f);
FFUSE_API double ffuse_features_stride_ms(const ffuse_features* f);
/* Copies frames*dims values row-major into out. */
FFUSE_API ffuse_status ffuse_features_copy_data(const ffuse_features* f, double* out,
                                                size_t capacity);

FFUSE_API ffuse_status ffuse_features_mean_normalize(const ffuse_features* f,
                                                     ffuse_features** out);
FFUSE_API ffuse_status ffuse_features_mean_var_normalize(const ffuse_features* f,
                                                         ffuse_features** out);
FFUSE_API ffuse_status ffuse_features_downsample(const ffuse_features* f,
                                                 double target_stride_ms,
                                                 ffuse_downsample_mode mode,
                                                 ffuse_features** out);
FFUSE_API ffuse_status ffuse_features_align_pair(const ffuse_features* u,
                                                 const ffuse_features* v,
                                                 ffuse_downsample_mode mode,
                                                 ffuse_features** out_u,
                                                 ffuse_features** out_v);

/* ---- synthetic pairs ---------------------------------------------------- */

typedef struct ffuse_synth_spec {
  uint32_t frames;
  uint32_t k1;
  uint32_t k2;
  double rho;
  uint32_t paired_dims;
  uint64_t seed;
  double stride_ms_u;
  double stride_ms_v;
} ffuse_synth_spec;

FFUSE_API void ffuse_synth_spec_default(ffuse_synth_spec* spec);
FFUSE_API ffuse_status ffuse_synth_generate(const ffuse_synth_spec* spec,
                                            ffuse_features** out_u,
                                            ffuse_features** out_v);

/* ---- correlation and losses -------------------------------------------- */

typedef struct ffuse_corr ffuse_corr;

FFUSE_API ffuse_status ffuse_corr_compute(const ffuse_features* u_t,
                                          const ffuse_features* v_t, ffuse_corr** out);
FFUSE_API void ffuse_corr_destroy(ffuse_corr* c);
FFUSE_API uint32_t ffuse_corr_rows(const ffuse_corr* c);
FFUSE_API uint32_t ffuse_corr_cols(const ffuse_corr* c);
FFUSE_API ffuse_status ffuse_corr_copy_data(const ffuse_corr* c, double* out,
                                            size_t capacity);
FFUSE_API double ffuse_corr_max_abs(const ffuse_corr* c);
FFUSE_API double ffuse_corr_mean_abs(const ffuse_corr* c);
FFUSE_API double ffuse_corr_max_abs_diagonal(const ffuse_corr* c);
/* Either path may be NULL to skip that output. */
FFUSE_API ffuse_status ffuse_corr_export(const ffuse_corr* c, const char* csv_path,
                                         const char* pgm_path);

/* c is rows x cols, row-major. */
FFUSE_API ffuse_status ffuse_refine_loss(const double* c, uint32_t rows, uint32_t cols,
                                         double epsilon, double* out_loss);

typedef struct ffuse_loss_breakdown {
  double task_loss;
  double refine_loss;
  double total;
  double masked_fraction;
} ffuse_loss_breakdown;

FFUSE_API ffuse_status ffuse_combined_loss(double task, double refine, double lambda,
                                           ffuse_loss_breakdown* out);

/* ---- fusion models ------------------------------------------------------ */

typedef enum ffuse_method {
  FFUSE_METHOD_CONCAT = 0,
  FFUSE_METHOD_LINEAR_PROJECTION = 1,
  FFUSE_METHOD_WEIGHTED_SUM = 2
} ffuse_method;

typedef enum ffuse_init_mode {
  FFUSE_INIT_INDEPENDENT = 0,
  FFUSE_INIT_MIRRORED = 1
} ffuse_init_mode;

typedef struct ffuse_fusion_config {
  ffuse_method method;
  uint32_t common_dim;
  uint32_t output_dim;
  double epsilon;
  double lambda;
} ffuse_fusion_config;

/* Linear projection, K=100, output 80, epsilon 0.2, lambda 0.3. */
FFUSE_API void ffuse_fusion_config_default(ffuse_fusion_config* cfg);
/* Overwrites lambda and epsilon of *cfg, leaving the other fields as they
 * are. "wsj": lambda 0.3, epsilon 0.2. "fsc": lambda 0.005, epsilon 0.6. */
FFUSE_API ffuse_status ffuse_fusion_config_preset(const char* name,
                                                  ffuse_fusion_config* cfg);
FFUSE_API ffuse_status ffuse_method_parse(const char* name, ffuse_method* out);

typedef struct ffuse_model ffuse_model;

FFUSE_API ffuse_status ffuse_model_create(const ffuse_fusion_config* cfg, uint32_t k1,
                                          uint32_t k2, uint64_t seed,
                                          ffuse_init_mode init, ffuse_model** out);
FFUSE_API ffuse_status ffuse_model_load(const char* path, ffuse_model** out);
FFUSE_API ffuse_status ffuse_model_save(const ffuse_model* m, const char* path);
FFUSE_API void ffuse_model_destroy(ffuse_model* m);
FFUSE_API uint32_t ffuse_model_fused_dim(const ffuse_model* m);
FFUSE_API ffuse_status ffuse_model_config(const ffuse_model* m, ffuse_fusion_config* out);
FFUSE_API ffuse_status ffuse_model_gate(const ffuse_model* m, double* alpha, double* beta);

/* Fused representation before the final projection. */
FFUSE_API ffuse_status ffuse_model_fuse(const ffuse_model* m, const ffuse_features* u,
                                        const ffuse_features* v, ffuse_features** out);
/* Fused representation mapped to output_dim. */
FFUSE_API ffuse_status ffuse_model_fuse_project(const ffuse_model* m,
                                                const ffuse_features* u,
                                                const ffuse_features* v,
                                                ffuse_features** out);
/* The two affine-transformed streams (projecting methods only). */
FFUSE_API ffuse_status ffuse_model_project_pair(const ffuse_model* m,
                                                const ffuse_features* u,
                                                const ffuse_features* v,
                                                ffuse_features** out_u,
                                                ffuse_features** out_v);

/* ---- training ----------------------------------------------------------- */

typedef enum ffuse_optimizer { FFUSE_OPT_SGD = 0, FFUSE_OPT_ADAM = 1 } ffuse_optimizer;

typedef struct ffuse_train_config {
  int64_t steps;
  double learning_rate;
  int64_t warmup_steps;
  int64_t batch_size;
  uint64_t seed;
  ffuse_optimizer optimizer;
  ffuse_init_mode init;
  double task_weight;
  int shuffle;
  int audit_first_step;
} ffuse_train_config;

/* 2000 steps, peak lr 0.002, warmup 100, batch 1, adam, task weight 1. */
FFUSE_API void ffuse_train_config_default(ffuse_train_config* cfg);
FFUSE_API double ffuse_lr_schedule(int64_t step, const ffuse_train_config* cfg);

typedef struct ffuse_report ffuse_report;

typedef struct ffuse_step_record {
  ffuse_loss_breakdown loss;
  double lr;
  double max_abs_corr;
} ffuse_step_record;

/* targets may be NULL (or hold NULL entries) when task_weight is 0. */
FFUSE_API ffuse_status ffuse_train(const ffuse_features* const* us,
                                   const ffuse_features* const* vs,
                                   const ffuse_features* const* targets, size_t count,
                                   const ffuse_fusion_config* fusion,
                                   const ffuse_train_config* train, ffuse_report** out);
FFUSE_API void ffuse_report_destroy(ffuse_report* r);
FFUSE_API size_t ffuse_report_steps(const ffuse_report* r);
FFUSE_API ffuse_status ffuse_report_step(const ffuse_report* r, size_t step,
                                         ffuse_step_record* out);
FFUSE_API double ffuse_report_max_abs_corr_initial(const ffuse_report* r);
FFUSE_API double ffuse_report_max_abs_corr_final(const ffuse_report* r);
/* NaN when no audit ran. */
FFUSE_API double ffuse_report_audit_max_rel_error(const ffuse_report* r);
FFUSE_API ffuse_status ffuse_report_initial_corr(const ffuse_report* r, ffuse_corr** out);
FFUSE_API ffuse_status ffuse_report_final_corr(const ffuse_report* r, ffuse_corr** out);
FFUSE_API ffuse_status ffuse_report_model(const ffuse_report* r, ffuse_model** out);

/* ---- run manifests ------------------------------------------------------ */

typedef struct ffuse_manifest ffuse_manifest;

FFUSE_API ffuse_status ffuse_manifest_create(ffuse_manifest** out);
/* Manifest pre-filled with every fusion and training setting. */
FFUSE_API ffuse_status ffuse_manifest_from_configs(const ffuse_fusion_config* fusion,
                                                   const ffuse_train_config* train,
                                                   ffuse_manifest** out);
FFUSE_API ffuse_status ffuse_manifest_read(const char* path, ffuse_manifest** out);
FFUSE_API ffuse_status ffuse_manifest_write(const ffuse_manifest* m, const char* path);
FFUSE_API void ffuse_manifest_destroy(ffuse_manifest* m);
FFUSE_API ffuse_status ffuse_manifest_set(ffuse_manifest* m, const char* key,
                                          const char* value);
/* Copies the NUL-terminated value into buf; *needed receives the buffer size
 * required. Missing keys fail with FFUSE_ERR_INVALID_ARGUMENT. */
FFUSE_API ffuse_status ffuse_manifest_get(const ffuse_manifest* m, const char* key,
                                          char* buf, size_t capacity, size_t* needed);
FFUSE_API size_t ffuse_manifest_size(const ffuse_manifest* m);

/* Writes manifest.txt, report.txt, steps.csv, corr_initial.{csv,pgm},
 * corr_final.{csv,pgm} and params.json into an existing directory. */
FFUSE_API ffuse_status ffuse_report_write(const ffuse_report* r,
                                          const ffuse_manifest* manifest,
                                          const char* dir);

/* ---- gradient audit ----------------------------------------------------- */

typedef struct ffuse_gradcheck_entry {
  char name[48];
  double max_rel_error;
  int32_t checked;
  int32_t skipped;
} ffuse_gradcheck_entry;

/* Fills up to capacity entries; *count receives the number of checks run
 * and *max_rel_error the worst relative error over all of them. */
FFUSE_API ffuse_status ffuse_gradcheck(uint64_t seed, ffuse_gradcheck_entry* entries,
                                       size_t capacity, size_t* count,
                                       double* max_rel_error);

#ifdef __cplusplus
}
#endif

#endif /* FFUSE_FFUSE_H_ */
