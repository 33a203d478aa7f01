/*
 * Copyright (C) 2026 The saas-attn Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the self-adaptive attention scaling library.
 *
 * Every call returns a saas_status. On failure, saas_last_error() holds a
 * message for the calling thread until its next failing call; for
 * configuration errors saas_last_error_field() names the offending key.
 * Handles are opaque and owned by the caller; release them with the
 * matching *_destroy function. Grids are row-major arrays of doubles.
 */
#ifndef SAAS_SAAS_H
#define SAAS_SAAS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(SAAS_BUILDING_LIBRARY)
#    define SAAS_API __declspec(dllexport)
#  else
#    define SAAS_API __declspec(dllimport)
#  endif
#else
#  define SAAS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum saas_status {
    SAAS_OK = 0,
    SAAS_ERROR_INVALID_ARGUMENT = 1,
    SAAS_ERROR_CONFIG = 2,
    SAAS_ERROR_NUMERICAL = 3,
    SAAS_ERROR_IO = 4,
    SAAS_ERROR_INTERNAL = 5
} saas_status;

typedef struct saas_config saas_config;
typedef struct saas_run saas_run;

SAAS_API const char* saas_version(void);
SAAS_API const char* saas_last_error(void);
SAAS_API const char* saas_last_error_field(void);

/* ---- configuration ---------------------------------------------------- */

/* Creates a configuration holding only defaults. */
SAAS_API saas_status saas_config_create(saas_config** out);
SAAS_API void saas_config_destroy(saas_config* config);

/* Merges the keys of an INI-style file; later calls and saas_config_set
 * take precedence. */
SAAS_API saas_status saas_config_load(saas_config* config, const char* path);

/* Merges the configuration snapshot stored in a run manifest. */
SAAS_API saas_status saas_config_load_manifest(saas_config* config, const char* manifest_path);

/* key is "section.key", e.g. "saas.tau". Unknown keys are rejected here;
 * values are checked by saas_config_validate and by every command. */
SAAS_API saas_status saas_config_set(saas_config* config, const char* key, const char* value);

/* Resolved value of key. *required (if non-null) receives the buffer size
 * needed including the terminator. */
SAAS_API saas_status saas_config_get(const saas_config* config, const char* key, char* buffer,
                                     size_t size, size_t* required);

SAAS_API saas_status saas_config_validate(const saas_config* config);

/* ---- commands --------------------------------------------------------- */

/* Samples in the configured run.mode and writes latent.bin, preview.pgm,
 * manifest.json (and trace/ when dump_trace != 0) into out_dir. */
SAAS_API saas_status saas_run_create(const saas_config* config, const char* out_dir,
                                     int dump_trace, saas_run** out);
SAAS_API void saas_run_destroy(saas_run* run);

SAAS_API saas_status saas_run_id(const saas_run* run, char* buffer, size_t size);
SAAS_API saas_status saas_run_latent_shape(const saas_run* run, size_t* rows, size_t* cols);
SAAS_API saas_status saas_run_latent(const saas_run* run, double* out, size_t count);
SAAS_API size_t saas_run_plan_count(const saas_run* run);
SAAS_API saas_status saas_run_plan_alpha(const saas_run* run, size_t plan, size_t instruction,
                                         int* source_step, double* alpha);

typedef enum saas_perturb_kind {
    SAAS_PERTURB_STEPS = 0,
    SAAS_PERTURB_LAYERS = 1
} saas_perturb_kind;

typedef enum saas_direction {
    SAAS_DIRECTION_BOTH = 0,
    SAAS_DIRECTION_TOP_DOWN = 1,
    SAAS_DIRECTION_BOTTOM_UP = 2
} saas_direction;

typedef struct saas_perturb_request {
    saas_perturb_kind kind;
    int from;
    int to; /* -1: number of steps or layers */
    int stride; /* 0: 5 for steps, 1 for layers */
    int single_step;
    saas_direction direction;
} saas_perturb_request;

SAAS_API void saas_perturb_request_init(saas_perturb_request* request);

/* Writes steps.csv or layers_<direction>.csv plus perturb_manifest.json. */
SAAS_API saas_status saas_perturb(const saas_config* config, const saas_perturb_request* request,
                                  const char* out_dir, size_t* curves_written);

/* layers: "vital", "all" or a comma list. */
SAAS_API saas_status saas_dump_attn(const char* run_dir, int step, const char* layers,
                                    int include_tokens, const char* out_dir, size_t* files_written);

typedef struct saas_bench_report {
    int repeats;
    double baseline_median_s;
    double saas_median_s;
    double incremental_percent;
} saas_bench_report;

SAAS_API saas_status saas_bench(const saas_config* config, int repeats, saas_bench_report* out);

/* Human-readable report including the full-scale reference figures. */
SAAS_API saas_status saas_bench_format(const saas_bench_report* report, char* buffer, size_t size,
                                       size_t* required);

/* ---- map primitives --------------------------------------------------- */

SAAS_API saas_status saas_gaussian_smooth(const double* map, size_t rows, size_t cols,
                                          int kernel_size, double sigma, double* out);
SAAS_API saas_status saas_minmax_normalize(const double* map, size_t count, double* out,
                                           int* degenerate);
SAAS_API saas_status saas_extract_mask(const double* normalized, size_t count, double tau,
                                       uint8_t* mask);
SAAS_API saas_status saas_otsu_threshold(const double* normalized, size_t count, double* tau,
                                         int* degenerate);
SAAS_API saas_status saas_scaling_factor(const double* image_map, const double* instruction_map,
                                         const uint8_t* mask, size_t count, double alpha_cap,
                                         double* alpha, int* skipped);
SAAS_API saas_status saas_latent_similarity(const double* a, const double* b, size_t count,
                                            double* out);

#ifdef __cplusplus
}
#endif

#endif /* SAAS_SAAS_H */
