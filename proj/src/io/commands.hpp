// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "controller.hpp"
#include "io/config.hpp"
#include "io/files.hpp"
#include "perturb.hpp"

namespace saas::io {

inline constexpr const char* kSoftwareVersion = "saas-attn 1.0.0";

/// Identifier derived from the resolved configuration.
std::string run_id(const RunConfig& config);

struct RunOutputs {
    std::string run_id;
    fs::path manifest;
    LatentState latent;
    std::vector<SaasPlan> plans;
};

/// Samples in the configured mode and writes latent.bin, preview.pgm,
/// manifest.json and (optionally) trace/ under `out_dir`.
RunOutputs cmd_run(const RunConfig& config, const fs::path& out_dir, bool dump_trace);

/// Reads the config snapshot of a run manifest back.
RunConfig config_from_manifest(const fs::path& manifest_path);

enum class PerturbKind { steps, layers };

struct PerturbRequest {
    PerturbKind kind = PerturbKind::steps;
    int from = 0;
    int to = -1;  // -1: num_steps (steps) or num_layers (layers)
    int stride = 0;  // 0: 5 for steps, 1 for layers
    bool single_step = false;
    std::vector<LayerDirection> directions{LayerDirection::top_down, LayerDirection::bottom_up};
};

/// Writes one CSV per curve plus perturb_manifest.json; returns the CSV paths.
std::vector<fs::path> cmd_perturb(const RunConfig& config, const PerturbRequest& request,
                                  const fs::path& out_dir);

struct DumpRequest {
    int step = 0;
    std::string layers = "vital";  // "vital", "all" or a comma list
    bool tokens = false;           // also dump every condition token's map
};

/// Writes PGM + JSON sidecar pairs for the image map, each instruction map
/// and mask (and per-token maps when requested); returns the PGM paths.
std::vector<fs::path> cmd_dump_attn(const fs::path& run_dir, const DumpRequest& request,
                                    const fs::path& out_dir);

struct BenchReport {
    int repeats = 0;
    double baseline_median_s = 0.0;
    double saas_median_s = 0.0;
    double incremental_percent = 0.0;
    std::vector<double> baseline_runs_s;
    std::vector<double> saas_runs_s;

    std::string text() const;
    json to_json() const;
};

BenchReport cmd_bench(const RunConfig& config, int repeats);

}  // namespace saas::io
