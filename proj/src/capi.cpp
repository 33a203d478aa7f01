// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "saas/saas.h"

#include <cstring>
#include <new>
#include <set>
#include <string>

#include "io/commands.hpp"
#include "io/config.hpp"
#include "perturb.hpp"
#include "scaling.hpp"

struct saas_config {
    saas::io::KeyValues values;
};

struct saas_run {
    saas::io::RunOutputs outputs;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_error_field;

saas_status fail(saas_status status, const std::string& message, const std::string& field = {}) {
    g_error = message;
    g_error_field = field;
    return status;
}

template <typename F>
saas_status guarded(F&& body) {
    try {
        body();
        return SAAS_OK;
    } catch (const saas::ConfigError& e) {
        return fail(SAAS_ERROR_CONFIG, e.what(), e.field());
    } catch (const saas::InvalidArgument& e) {
        return fail(SAAS_ERROR_INVALID_ARGUMENT, e.what());
    } catch (const saas::NumericalError& e) {
        return fail(SAAS_ERROR_NUMERICAL, e.what());
    } catch (const saas::IoError& e) {
        return fail(SAAS_ERROR_IO, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(SAAS_ERROR_IO, e.what());
    } catch (const std::bad_alloc&) {
        return fail(SAAS_ERROR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(SAAS_ERROR_INTERNAL, e.what());
    }
}

saas_status null_argument(const char* name) {
    return fail(SAAS_ERROR_INVALID_ARGUMENT, std::string(name) + " must not be null");
}

saas_status copy_out(const std::string& value, char* buffer, size_t size, size_t* required) {
    if (required)
        *required = value.size() + 1;
    if (!buffer)
        return size == 0 ? SAAS_OK : null_argument("buffer");
    if (size < value.size() + 1)
        return fail(SAAS_ERROR_INVALID_ARGUMENT, "buffer too small");
    std::memcpy(buffer, value.c_str(), value.size() + 1);
    return SAAS_OK;
}

saas::Matrix grid_from(const double* data, size_t rows, size_t cols) {
    return Eigen::Map<const saas::Matrix>(data, static_cast<Eigen::Index>(rows),
                                          static_cast<Eigen::Index>(cols));
}

}  // namespace

extern "C" {

const char* saas_version(void) { return saas::io::kSoftwareVersion; }
const char* saas_last_error(void) { return g_error.c_str(); }
const char* saas_last_error_field(void) { return g_error_field.c_str(); }

saas_status saas_config_create(saas_config** out) {
    if (!out)
        return null_argument("out");
    return guarded([&] { *out = new saas_config{}; });
}

void saas_config_destroy(saas_config* config) { delete config; }

saas_status saas_config_load(saas_config* config, const char* path) {
    if (!config || !path)
        return null_argument(!config ? "config" : "path");
    return guarded([&] {
        for (const auto& [key, value] : saas::io::read_config_file(path))
            config->values[key] = value;
    });
}

saas_status saas_config_load_manifest(saas_config* config, const char* manifest_path) {
    if (!config || !manifest_path)
        return null_argument(!config ? "config" : "manifest_path");
    return guarded([&] {
        const saas::io::RunConfig snapshot = saas::io::config_from_manifest(manifest_path);
        for (const auto& [key, value] : saas::io::config_to_kv(snapshot))
            config->values[key] = value;
    });
}

saas_status saas_config_set(saas_config* config, const char* key, const char* value) {
    if (!config || !key || !value)
        return null_argument(!config ? "config" : !key ? "key" : "value");
    return guarded([&] {
        static const std::set<std::string> known = [] {
            const auto keys = saas::io::known_config_keys();
            return std::set<std::string>(keys.begin(), keys.end());
        }();
        if (!known.count(key))
            throw saas::ConfigError(key, "unknown configuration key");
        config->values[key] = value;
    });
}

saas_status saas_config_get(const saas_config* config, const char* key, char* buffer, size_t size,
                            size_t* required) {
    if (!config || !key)
        return null_argument(!config ? "config" : "key");
    std::string value;
    const saas_status s = guarded([&] {
        const auto resolved = saas::io::config_to_kv(saas::io::config_from_kv(config->values));
        const auto it = resolved.find(key);
        if (it == resolved.end())
            throw saas::ConfigError(key, "unknown configuration key");
        value = it->second;
    });
    if (s != SAAS_OK)
        return s;
    return copy_out(value, buffer, size, required);
}

saas_status saas_config_validate(const saas_config* config) {
    if (!config)
        return null_argument("config");
    return guarded([&] { saas::io::config_from_kv(config->values); });
}

saas_status saas_run_create(const saas_config* config, const char* out_dir, int dump_trace,
                            saas_run** out) {
    if (!config || !out_dir || !out)
        return null_argument(!config ? "config" : !out_dir ? "out_dir" : "out");
    return guarded([&] {
        const saas::io::RunConfig c = saas::io::config_from_kv(config->values);
        *out = new saas_run{saas::io::cmd_run(c, out_dir, dump_trace != 0)};
    });
}

void saas_run_destroy(saas_run* run) { delete run; }

saas_status saas_run_id(const saas_run* run, char* buffer, size_t size) {
    if (!run)
        return null_argument("run");
    return copy_out(run->outputs.run_id, buffer, size, nullptr);
}

saas_status saas_run_latent_shape(const saas_run* run, size_t* rows, size_t* cols) {
    if (!run || !rows || !cols)
        return null_argument(!run ? "run" : "rows/cols");
    *rows = static_cast<size_t>(run->outputs.latent.values.rows());
    *cols = static_cast<size_t>(run->outputs.latent.values.cols());
    return SAAS_OK;
}

saas_status saas_run_latent(const saas_run* run, double* out, size_t count) {
    if (!run || !out)
        return null_argument(!run ? "run" : "out");
    const auto& values = run->outputs.latent.values;
    if (count != static_cast<size_t>(values.size()))
        return fail(SAAS_ERROR_INVALID_ARGUMENT, "latent buffer has the wrong length");
    std::memcpy(out, values.data(), count * sizeof(double));
    return SAAS_OK;
}

size_t saas_run_plan_count(const saas_run* run) { return run ? run->outputs.plans.size() : 0; }

saas_status saas_run_plan_alpha(const saas_run* run, size_t plan, size_t instruction,
                                int* source_step, double* alpha) {
    if (!run || !alpha)
        return null_argument(!run ? "run" : "alpha");
    const auto& plans = run->outputs.plans;
    if (plan >= plans.size() || instruction >= plans[plan].entries.size())
        return fail(SAAS_ERROR_INVALID_ARGUMENT, "plan or instruction index out of range");
    if (source_step)
        *source_step = plans[plan].source_step;
    *alpha = plans[plan].entries[instruction].alpha;
    return SAAS_OK;
}

void saas_perturb_request_init(saas_perturb_request* request) {
    if (!request)
        return;
    *request = saas_perturb_request{SAAS_PERTURB_STEPS, 0, -1, 0, 0, SAAS_DIRECTION_BOTH};
}

saas_status saas_perturb(const saas_config* config, const saas_perturb_request* request,
                         const char* out_dir, size_t* curves_written) {
    if (!config || !request || !out_dir)
        return null_argument(!config ? "config" : !request ? "request" : "out_dir");
    return guarded([&] {
        saas::io::PerturbRequest r;
        r.kind = request->kind == SAAS_PERTURB_LAYERS ? saas::io::PerturbKind::layers
                                                      : saas::io::PerturbKind::steps;
        r.from = request->from;
        r.to = request->to;
        r.stride = request->stride;
        r.single_step = request->single_step != 0;
        switch (request->direction) {
        case SAAS_DIRECTION_TOP_DOWN: r.directions = {saas::LayerDirection::top_down}; break;
        case SAAS_DIRECTION_BOTTOM_UP: r.directions = {saas::LayerDirection::bottom_up}; break;
        default: break;
        }
        const auto written =
            saas::io::cmd_perturb(saas::io::config_from_kv(config->values), r, out_dir);
        if (curves_written)
            *curves_written = written.size();
    });
}

saas_status saas_dump_attn(const char* run_dir, int step, const char* layers, int include_tokens,
                           const char* out_dir, size_t* files_written) {
    if (!run_dir || !out_dir)
        return null_argument(!run_dir ? "run_dir" : "out_dir");
    return guarded([&] {
        saas::io::DumpRequest r;
        r.step = step;
        if (layers)
            r.layers = layers;
        r.tokens = include_tokens != 0;
        const auto written = saas::io::cmd_dump_attn(run_dir, r, out_dir);
        if (files_written)
            *files_written = written.size();
    });
}

saas_status saas_bench(const saas_config* config, int repeats, saas_bench_report* out) {
    if (!config || !out)
        return null_argument(!config ? "config" : "out");
    return guarded([&] {
        const auto report = saas::io::cmd_bench(saas::io::config_from_kv(config->values), repeats);
        *out = saas_bench_report{report.repeats, report.baseline_median_s, report.saas_median_s,
                                 report.incremental_percent};
    });
}

saas_status saas_bench_format(const saas_bench_report* report, char* buffer, size_t size,
                              size_t* required) {
    if (!report)
        return null_argument("report");
    saas::io::BenchReport r;
    r.repeats = report->repeats;
    r.baseline_median_s = report->baseline_median_s;
    r.saas_median_s = report->saas_median_s;
    r.incremental_percent = report->incremental_percent;
    return copy_out(r.text(), buffer, size, required);
}

saas_status saas_gaussian_smooth(const double* map, size_t rows, size_t cols, int kernel_size,
                                 double sigma, double* out) {
    if (!map || !out)
        return null_argument(!map ? "map" : "out");
    return guarded([&] {
        const saas::SpatialMap smoothed =
            saas::gaussian_smooth({grid_from(map, rows, cols), "map"}, kernel_size, sigma);
        std::memcpy(out, smoothed.grid.data(), rows * cols * sizeof(double));
    });
}

saas_status saas_minmax_normalize(const double* map, size_t count, double* out, int* degenerate) {
    if (!map || !out)
        return null_argument(!map ? "map" : "out");
    return guarded([&] {
        const saas::NormalizedMap n = saas::minmax_normalize(grid_from(map, 1, count));
        std::memcpy(out, n.grid.data(), count * sizeof(double));
        if (degenerate)
            *degenerate = n.degenerate ? 1 : 0;
    });
}

saas_status saas_extract_mask(const double* normalized, size_t count, double tau, uint8_t* mask) {
    if (!normalized || !mask)
        return null_argument(!normalized ? "normalized" : "mask");
    return guarded([&] {
        const saas::InstructionMask m = saas::extract_mask(grid_from(normalized, 1, count), tau);
        for (size_t i = 0; i < count; ++i)
            mask[i] = m.grid.data()[i] ? 1 : 0;
    });
}

saas_status saas_otsu_threshold(const double* normalized, size_t count, double* tau, int* degenerate) {
    if (!normalized || !tau)
        return null_argument(!normalized ? "normalized" : "tau");
    return guarded([&] {
        const saas::OtsuResult r = saas::otsu_threshold(grid_from(normalized, 1, count));
        *tau = r.tau;
        if (degenerate)
            *degenerate = r.degenerate ? 1 : 0;
    });
}

saas_status saas_scaling_factor(const double* image_map, const double* instruction_map,
                                const uint8_t* mask, size_t count, double alpha_cap, double* alpha,
                                int* skipped) {
    if (!image_map || !instruction_map || !mask || !alpha)
        return null_argument("image_map/instruction_map/mask/alpha");
    return guarded([&] {
        saas::BoolGrid m(1, static_cast<Eigen::Index>(count));
        for (size_t i = 0; i < count; ++i)
            m.data()[i] = mask[i] != 0;
        const saas::ScalingFactor f = saas::compute_scaling_factor(
            grid_from(image_map, 1, count), grid_from(instruction_map, 1, count), m, alpha_cap);
        *alpha = f.alpha;
        if (skipped)
            *skipped = f.skipped ? 1 : 0;
    });
}

saas_status saas_latent_similarity(const double* a, const double* b, size_t count, double* out) {
    if (!a || !b || !out)
        return null_argument("a/b/out");
    return guarded([&] {
        *out = saas::latent_similarity({0, grid_from(a, 1, count)}, {0, grid_from(b, 1, count)});
    });
}

}  // extern "C"
