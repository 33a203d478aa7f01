// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end over the C API.
//
//   saas run        sample in baseline, saas or fixed mode
//   saas perturb    step-wise / layer-wise blank-input sweeps
//   saas dump-attn  export maps and masks of a traced run as PGM
//   saas bench      baseline vs saas wall-clock overhead
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "saas/saas.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int exit_code(saas_status status) {
    switch (status) {
    case SAAS_OK: return 0;
    case SAAS_ERROR_CONFIG:
    case SAAS_ERROR_INVALID_ARGUMENT: return kExitUsage;
    default: return kExitRuntime;
    }
}

int report(saas_status status) {
    if (status != SAAS_OK) {
        const std::string field = saas_last_error_field();
        std::fprintf(stderr, "saas: error%s%s: %s\n", field.empty() ? "" : " in ",
                     field.c_str(), saas_last_error());
    }
    return exit_code(status);
}

class Config {
public:
    Config() { saas_config_create(&m_handle); }
    ~Config() { saas_config_destroy(m_handle); }
    Config(const Config&) = delete;
    Config& operator=(const Config&) = delete;

    saas_config* get() const { return m_handle; }

private:
    saas_config* m_handle = nullptr;
};

struct CommonOptions {
    std::string config_path;
    std::string replay;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string>> flags;  // key, value from named flags
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("-c,--config", opts.config_path, "configuration file (INI sections)");
    cmd->add_option("--set", opts.sets, "override, section.key=value (repeatable)");
}

// Defaults, then the file or replayed manifest, then --set, then named flags.
saas_status build_config(const CommonOptions& opts, Config& config) {
    saas_status s = SAAS_OK;
    if (!opts.replay.empty())
        s = saas_config_load_manifest(config.get(), opts.replay.c_str());
    if (s == SAAS_OK && !opts.config_path.empty())
        s = saas_config_load(config.get(), opts.config_path.c_str());
    for (const std::string& kv : opts.sets) {
        if (s != SAAS_OK)
            break;
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "saas: --set expects section.key=value, got '%s'\n", kv.c_str());
            return SAAS_ERROR_CONFIG;
        }
        s = saas_config_set(config.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    }
    for (const auto& [key, value] : opts.flags) {
        if (s != SAAS_OK)
            break;
        s = saas_config_set(config.get(), key.c_str(), value.c_str());
    }
    if (s == SAAS_OK)
        s = saas_config_validate(config.get());
    return s;
}

template <typename T>
void flag_value(std::vector<std::pair<std::string, std::string>>& flags, const char* key,
                const std::optional<T>& value) {
    if (!value)
        return;
    if constexpr (std::is_same_v<T, std::string>)
        flags.emplace_back(key, *value);
    else if constexpr (std::is_floating_point_v<T>) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", *value);
        flags.emplace_back(key, buf);
    } else
        flags.emplace_back(key, std::to_string(*value));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-adaptive attention scaling on a toy flow-matching transformer"};
    app.set_version_flag("--version", saas_version());
    app.require_subcommand(1);

    // run
    CommonOptions run_opts;
    std::optional<std::string> mode, mask, threshold;
    std::optional<std::uint64_t> seed, weights_seed;
    std::optional<double> factor, force_alpha, tau;
    std::string run_out = "saas_run";
    bool dump_trace = false;
    CLI::App* run = app.add_subcommand("run", "sample once and write latent, preview and manifest");
    add_common(run, run_opts);
    run->add_option("--replay", run_opts.replay, "rerun from a run manifest");
    run->add_option("--mode", mode, "baseline | saas | fixed")
        ->check(CLI::IsMember({"baseline", "saas", "fixed"}));
    run->add_option("--seed", seed, "sampler seed");
    run->add_option("--weights-seed", weights_seed, "backbone weight seed");
    run->add_option("--factor", factor, "fixed-mode scaling factor (presets 2 and 5)");
    run->add_option("--force-alpha", force_alpha, "pin every scaling factor");
    run->add_option("--mask", mask, "adaptive | all")->check(CLI::IsMember({"adaptive", "all"}));
    run->add_option("--tau", tau, "mask threshold in [0, 1]");
    run->add_option("--threshold", threshold, "fixed | otsu")->check(CLI::IsMember({"fixed", "otsu"}));
    run->add_option("-o,--out", run_out, "output directory");
    run->add_flag("--dump-trace", dump_trace, "write every attention matrix under <out>/trace");

    // perturb
    CommonOptions perturb_opts;
    std::string perturb_out = "saas_perturb";
    saas_perturb_request request;
    saas_perturb_request_init(&request);
    std::string direction = "both";
    bool single_step = false;
    CLI::App* perturb = app.add_subcommand("perturb", "blank-input perturbation sweeps");
    perturb->require_subcommand(1);
    CLI::App* p_steps = perturb->add_subcommand("steps", "replace conditions from step s onward");
    CLI::App* p_layers = perturb->add_subcommand("layers", "replace condition states in n layers");
    for (CLI::App* sub : {p_steps, p_layers}) {
        add_common(sub, perturb_opts);
        sub->add_option("--from", request.from, "first sweep value");
        sub->add_option("--to", request.to, "last sweep value (default: steps or layers)");
        sub->add_option("--stride", request.stride, "sweep stride (default 5 for steps, 1 for layers)");
        sub->add_option("-o,--out", perturb_out, "output directory");
    }
    p_steps->add_flag("--single-step", single_step, "perturb only step s");
    p_layers->add_option("--direction", direction, "top_down | bottom_up | both")
        ->check(CLI::IsMember({"top_down", "bottom_up", "both"}));

    // dump-attn
    std::string dump_run, dump_out, dump_layers = "vital";
    int dump_step = 0;
    bool dump_tokens = false;
    CLI::App* dump = app.add_subcommand("dump-attn", "export attention maps and masks as PGM");
    dump->add_option("--run", dump_run, "run directory written with --dump-trace")->required();
    dump->add_option("--step", dump_step, "sampling step");
    dump->add_option("--layers", dump_layers, "vital | all | comma list");
    dump->add_flag("--tokens", dump_tokens, "also dump every condition token's map");
    dump->add_option("-o,--out", dump_out, "output directory (default: <run>/maps)");

    // bench
    CommonOptions bench_opts;
    int repeats = 5;
    std::string bench_json;
    CLI::App* bench = app.add_subcommand("bench", "median wall time, baseline vs saas");
    add_common(bench, bench_opts);
    bench->add_option("--repeats", repeats, "repeats per mode (>= 3)");
    bench->add_option("--json", bench_json, "also write the report as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    if (run->parsed()) {
        flag_value(run_opts.flags, "run.mode", mode);
        flag_value(run_opts.flags, "sampler.seed", seed);
        flag_value(run_opts.flags, "backbone.seed", weights_seed);
        flag_value(run_opts.flags, "run.factor", factor);
        flag_value(run_opts.flags, "saas.force_alpha", force_alpha);
        flag_value(run_opts.flags, "saas.mask", mask);
        flag_value(run_opts.flags, "saas.tau", tau);
        flag_value(run_opts.flags, "saas.threshold", threshold);
        Config config;
        if (saas_status s = build_config(run_opts, config); s != SAAS_OK)
            return report(s);
        saas_run* result = nullptr;
        if (saas_status s = saas_run_create(config.get(), run_out.c_str(), dump_trace ? 1 : 0, &result);
            s != SAAS_OK)
            return report(s);
        char id[32] = {};
        saas_run_id(result, id, sizeof id);
        std::printf("run %s written to %s\n", id, run_out.c_str());
        saas_run_destroy(result);
        return 0;
    }

    if (perturb->parsed()) {
        request.kind = p_layers->parsed() ? SAAS_PERTURB_LAYERS : SAAS_PERTURB_STEPS;
        request.single_step = single_step ? 1 : 0;
        request.direction = direction == "top_down"    ? SAAS_DIRECTION_TOP_DOWN
                            : direction == "bottom_up" ? SAAS_DIRECTION_BOTTOM_UP
                                                       : SAAS_DIRECTION_BOTH;
        Config config;
        if (saas_status s = build_config(perturb_opts, config); s != SAAS_OK)
            return report(s);
        size_t curves = 0;
        if (saas_status s = saas_perturb(config.get(), &request, perturb_out.c_str(), &curves);
            s != SAAS_OK)
            return report(s);
        std::printf("%zu curve(s) written to %s\n", curves, perturb_out.c_str());
        return 0;
    }

    if (dump->parsed()) {
        if (dump_out.empty())
            dump_out = dump_run + "/maps";
        size_t files = 0;
        if (saas_status s = saas_dump_attn(dump_run.c_str(), dump_step, dump_layers.c_str(),
                                           dump_tokens ? 1 : 0, dump_out.c_str(), &files);
            s != SAAS_OK)
            return report(s);
        std::printf("%zu map(s) written to %s\n", files, dump_out.c_str());
        return 0;
    }

    if (bench->parsed()) {
        Config config;
        if (saas_status s = build_config(bench_opts, config); s != SAAS_OK)
            return report(s);
        saas_bench_report result{};
        if (saas_status s = saas_bench(config.get(), repeats, &result); s != SAAS_OK)
            return report(s);
        size_t needed = 0;
        saas_bench_format(&result, nullptr, 0, &needed);
        std::string text(needed, '\0');
        saas_bench_format(&result, text.data(), text.size(), nullptr);
        std::fputs(text.c_str(), stdout);
        if (!bench_json.empty()) {
            std::FILE* f = std::fopen(bench_json.c_str(), "w");
            if (!f) {
                std::fprintf(stderr, "saas: cannot write %s\n", bench_json.c_str());
                return kExitRuntime;
            }
            std::fprintf(f,
                         "{\n  \"baseline_median_s\": %.17g,\n  \"incremental_percent\": %.17g,\n"
                         "  \"repeats\": %d,\n  \"saas_median_s\": %.17g\n}\n",
                         result.baseline_median_s, result.incremental_percent, result.repeats,
                         result.saas_median_s);
            std::fclose(f);
        }
        return 0;
    }
    return kExitUsage;
}
