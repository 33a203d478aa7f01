// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "io/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>
#include <sstream>

namespace saas::io {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

json config_json(const RunConfig& config) {
    json j = json::object();
    for (const auto& [key, value] : config_to_kv(config))
        j[key] = value;
    return j;
}

json plans_json(const std::vector<SaasPlan>& plans) {
    json out = json::array();
    for (const SaasPlan& p : plans) {
        json entries = json::array();
        for (const PlanEntry& e : p.entries) {
            entries.push_back({{"instruction", e.mask.instruction},
                               {"alpha", e.alpha},
                               {"tau", e.tau},
                               {"mask_cells", e.mask.grid.count()},
                               {"degenerate_map", e.degenerate_map},
                               {"skipped", e.skipped},
                               {"capped", e.capped}});
        }
        out.push_back({{"source_step", p.source_step}, {"entries", entries}});
    }
    return out;
}

Matrix preview_grid(const LatentState& latent, std::size_t grid_side) {
    return unflatten_spatial(latent.values.rowwise().mean(), grid_side);
}

struct Model {
    TokenLayout layout;
    BackboneWeights weights;
    ConditionInput conditions;
};

Model make_model(const RunConfig& config) {
    Model m{config.layout.build(), init_backbone(config.backbone), {}};
    m.conditions = make_condition_input(m.layout, config.backbone.vocab_size, config.condition_seed);
    return m;
}

SampleResult sample_mode(const RunConfig& config, const Model& model, TraceCapture capture,
                         std::vector<SaasPlan>* plans) {
    SampleOptions options;
    options.capture = capture;
    std::optional<ScalingController> controller;
    if (config.mode != RunMode::baseline) {
        controller.emplace(model.layout, config.backbone.num_layers, config.sampler.num_steps,
                           config.saas,
                           config.mode == RunMode::fixed ? ScalingMode::fixed : ScalingMode::saas,
                           config.factor);
        options.controller = &*controller;
    }
    SampleResult result = sample(model.layout, model.weights, config.sampler, model.conditions, options);
    if (plans && controller)
        *plans = controller->plans();
    return result;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<int> parse_layer_selection(const std::string& selection, const RunConfig& config) {
    if (selection == "vital")
        return config.saas.resolved_vital_layers(config.backbone.num_layers);
    std::vector<int> layers;
    if (selection == "all") {
        for (int l = 0; l < config.backbone.num_layers; ++l)
            layers.push_back(l);
        return layers;
    }
    std::istringstream in(selection);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            const int l = std::stoi(item, &used);
            if (used != item.size())
                throw std::invalid_argument(item);
            if (l < 0 || l >= config.backbone.num_layers)
                throw InvalidArgument("layer " + item + " outside the backbone");
            layers.push_back(l);
        } catch (const std::logic_error&) {
            throw InvalidArgument("bad layer selection '" + selection + "'");
        }
    }
    if (layers.empty())
        throw InvalidArgument("empty layer selection");
    return layers;
}

}  // namespace

std::string run_id(const RunConfig& config) { return fnv1a_hex(config_json(config).dump()); }

RunOutputs cmd_run(const RunConfig& config, const fs::path& out_dir, bool dump_trace) {
    json timings = json::object();
    auto start = Clock::now();
    const Model model = make_model(config);
    timings["init_s"] = seconds_since(start);

    start = Clock::now();
    RunOutputs out;
    SampleResult result =
        sample_mode(config, model, dump_trace ? TraceCapture::all : TraceCapture::none, &out.plans);
    timings["sample_s"] = seconds_since(start);

    start = Clock::now();
    fs::create_directories(out_dir);
    const std::string latent_bytes = encode_matrix(result.latent.values);
    write_file_atomic(out_dir / "latent.bin", latent_bytes);
    write_pgm(out_dir / "preview.pgm", map_to_pgm(preview_grid(result.latent, model.layout.grid_side)),
              PgmFormat::raw);
    json outputs = {{"latent", "latent.bin"}, {"preview", "preview.pgm"}};
    if (dump_trace) {
        write_trace(out_dir / "trace", result.trace);
        outputs["trace"] = "trace/manifest.json";
    }
    timings["write_s"] = seconds_since(start);

    out.run_id = run_id(config);
    out.latent = std::move(result.latent);
    const json manifest = {
        {"software_version", kSoftwareVersion},
        {"run_id", out.run_id},
        {"mode", to_string(config.mode)},
        {"config", config_json(config)},
        {"layout", layout_to_json(config.layout)},
        {"seeds",
         {{"weights", config.backbone.seed},
          {"sampler", config.sampler.seed},
          {"conditions", config.condition_seed}}},
        {"outputs", outputs},
        {"latent_fnv1a", fnv1a_hex(latent_bytes)},
        {"step_convention", "step = sampling iteration, 0 is the noisiest"},
        {"plans", plans_json(out.plans)},
        {"timings", timings},
    };
    out.manifest = out_dir / "manifest.json";
    write_file_atomic(out.manifest, canonical_json(manifest));
    return out;
}

RunConfig config_from_manifest(const fs::path& manifest_path) {
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    if (!manifest.contains("config") || !manifest["config"].is_object())
        throw IoError("manifest " + manifest_path.string() + " has no config snapshot");
    KeyValues kv;
    for (const auto& [key, value] : manifest["config"].items())
        kv[key] = value.get<std::string>();
    return config_from_kv(kv);
}

std::vector<fs::path> cmd_perturb(const RunConfig& config, const PerturbRequest& request,
                                  const fs::path& out_dir) {
    const int limit = request.kind == PerturbKind::steps ? config.sampler.num_steps
                                                         : config.backbone.num_layers;
    const int to = request.to < 0 ? limit : request.to;
    const int stride = request.stride == 0 ? (request.kind == PerturbKind::steps ? 5 : 1)
                                           : request.stride;
    if (stride < 1)
        throw ConfigError("stride", "must be at least 1");
    if (request.from < 0 || request.from > to || to > limit)
        throw ConfigError("from/to", "sweep range must lie within [0, " + std::to_string(limit) + "]");
    std::vector<int> grid;
    for (int p = request.from; p <= to; p += stride)
        grid.push_back(p);

    const Model model = make_model(config);
    const PerturbationContext ctx{model.layout, model.weights, config.sampler, model.conditions};
    const LatentState baseline = run_baseline(ctx);
    RunConfig baseline_config = config;
    baseline_config.mode = RunMode::baseline;
    const std::string baseline_id = run_id(baseline_config);

    std::vector<fs::path> written;
    json curves = json::array();
    auto emit = [&](SimilarityReport report, const std::string& name, json params) {
        report.baseline_id = baseline_id;
        const fs::path csv = out_dir / (name + ".csv");
        write_curve_csv(csv, report);
        written.push_back(csv);
        json perturbed = json::array();
        for (const SweepPoint& p : report.curve)
            perturbed.push_back(fnv1a_hex(baseline_id + "/" + name + "/" + std::to_string(p.parameter)));
        params["csv"] = csv.filename().string();
        params["perturbed_run_ids"] = perturbed;
        curves.push_back(params);
    };

    if (request.kind == PerturbKind::steps) {
        emit(sweep_steps(ctx, baseline, grid, request.single_step), "steps",
             {{"kind", "step_wise"}, {"single_step", request.single_step}});
    } else {
        for (LayerDirection d : request.directions)
            emit(sweep_layers(ctx, baseline, d, grid), std::string("layers_") + to_string(d),
                 {{"kind", "layer_wise"}, {"direction", to_string(d)}});
    }

    const json manifest = {{"software_version", kSoftwareVersion},
                           {"baseline_run_id", baseline_id},
                           {"config", config_json(baseline_config)},
                           {"layout", layout_to_json(config.layout)},
                           {"sweep", {{"from", request.from}, {"to", to}, {"stride", stride}}},
                           {"curves", curves}};
    write_file_atomic(out_dir / "perturb_manifest.json", canonical_json(manifest));
    return written;
}

std::vector<fs::path> cmd_dump_attn(const fs::path& run_dir, const DumpRequest& request,
                                    const fs::path& out_dir) {
    const fs::path manifest_path = run_dir / "manifest.json";
    if (!fs::exists(manifest_path))
        throw IoError("no run manifest at " + manifest_path.string());
    const RunConfig config = config_from_manifest(manifest_path);
    const std::string source = run_id(config);
    if (request.step < 0 || request.step >= config.sampler.num_steps)
        throw InvalidArgument("step " + std::to_string(request.step) + " outside the run");
    const std::vector<int> layers = parse_layer_selection(request.layers, config);
    const std::vector<AttentionRecord> records = read_trace(run_dir / "trace", request.step, layers);
    if (records.empty())
        throw IoError("trace has no records for step " + std::to_string(request.step));

    const TokenLayout layout = config.layout.build();
    SaasConfig saas = config.saas;
    saas.vital_layers = layers;
    PlanMaps maps;
    const SaasPlan plan = build_plan(records, request.step, layout, saas,
                                     config.backbone.num_layers, &maps);

    std::vector<fs::path> written;
    auto emit = [&](const std::string& stem, const PgmImage& image, PgmFormat format, json sidecar) {
        const fs::path pgm = out_dir / (stem + ".pgm");
        write_pgm(pgm, image, format);
        sidecar["step"] = request.step;
        sidecar["layer_set"] = layers;
        sidecar["source_run"] = source;
        write_file_atomic(out_dir / (stem + ".json"), canonical_json(sidecar));
        written.push_back(pgm);
    };
    const std::string prefix = "step" + std::to_string(request.step) + "_";

    if (!layout.image.empty()) {
        emit(prefix + "I_map", map_to_pgm(maps.image_map.grid), PgmFormat::raw,
             {{"subject", "I"}, {"instruction", nullptr}, {"kind", "map"},
              {"tau", nullptr}, {"alpha", nullptr},
              {"degenerate_flags", {{"degenerate_map", minmax_normalize(maps.image_map.grid).degenerate}}}});
    }
    for (std::size_t i = 0; i < plan.entries.size(); ++i) {
        const PlanEntry& e = plan.entries[i];
        const json flags = {{"degenerate_map", e.degenerate_map}, {"skipped", e.skipped}, {"capped", e.capped}};
        const std::string subject = "T" + std::to_string(i);
        emit(prefix + subject + "_map", map_to_pgm(maps.instruction_maps[i].grid), PgmFormat::raw,
             {{"subject", subject}, {"instruction", i}, {"kind", "map"},
              {"tau", e.tau}, {"alpha", e.alpha}, {"degenerate_flags", flags}});
        emit(prefix + subject + "_mask", mask_to_pgm(e.mask.grid), PgmFormat::plain,
             {{"subject", subject}, {"instruction", i}, {"kind", "mask"},
              {"tau", e.tau}, {"alpha", e.alpha}, {"degenerate_flags", flags}});
    }
    if (request.tokens) {
        const std::vector<SpatialMap> per_token =
            average_vital_cross_attention(records, request.step, layout, layers);
        for (const SpatialMap& m : per_token) {
            emit(prefix + m.subject + "_map", map_to_pgm(m.grid), PgmFormat::raw,
                 {{"subject", m.subject}, {"instruction", nullptr}, {"kind", "token_map"},
                  {"tau", nullptr}, {"alpha", nullptr},
                  {"degenerate_flags", {{"degenerate_map", minmax_normalize(m.grid).degenerate}}}});
        }
    }
    return written;
}

std::string BenchReport::text() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "reference (OmniGen, RTX A6000, 512x512): 29.1 s -> 29.4 s with SaaS, +1.03%%\n"
                  "toy backbone, %d repeats (median wall time)\n"
                  "  baseline  %.6f s\n"
                  "  saas      %.6f s\n"
                  "  incremental expense  %+.2f %%\n",
                  repeats, baseline_median_s, saas_median_s, incremental_percent);
    return buf;
}

json BenchReport::to_json() const {
    return {{"repeats", repeats},
            {"baseline_median_s", baseline_median_s},
            {"saas_median_s", saas_median_s},
            {"incremental_percent", incremental_percent},
            {"baseline_runs_s", baseline_runs_s},
            {"saas_runs_s", saas_runs_s},
            {"reference", {{"baseline_s", 29.1}, {"saas_s", 29.4}, {"incremental_percent", 1.03}}}};
}

BenchReport cmd_bench(const RunConfig& config, int repeats) {
    if (repeats < 3)
        throw ConfigError("repeats", "must be at least 3");
    const Model model = make_model(config);
    RunConfig baseline = config;
    baseline.mode = RunMode::baseline;
    RunConfig scaled = config;
    scaled.mode = RunMode::saas;

    BenchReport report;
    report.repeats = repeats;
    for (int i = 0; i < repeats; ++i) {
        auto start = Clock::now();
        sample_mode(baseline, model, TraceCapture::none, nullptr);
        report.baseline_runs_s.push_back(seconds_since(start));
        start = Clock::now();
        sample_mode(scaled, model, TraceCapture::none, nullptr);
        report.saas_runs_s.push_back(seconds_since(start));
    }
    report.baseline_median_s = median(report.baseline_runs_s);
    report.saas_median_s = median(report.saas_runs_s);
    report.incremental_percent =
        100.0 * (report.saas_median_s - report.baseline_median_s) / report.baseline_median_s;
    return report;
}

}  // namespace saas::io
