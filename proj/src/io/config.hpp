// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Run configuration: an INI-style file of `key = value` lines grouped in
// sections, merged with command-line overrides. Keys are addressed as
// "section.key". Unknown keys are rejected.
//
//   [backbone]   layers heads dim vocab ffn_mult seed
//   [layout]     grid_side image_grid_side text_len spans   (spans: "0-4,4-8", text-relative, half-open)
//   [sampler]    steps image_guidance text_guidance seed
//   [saas]       task tau threshold xi vital_layers window alpha_cap
//                kernel_size kernel_sigma outside_mask force_alpha mask
//   [conditions] seed
//   [run]        mode factor

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "backbone.hpp"
#include "layout.hpp"
#include "scaling.hpp"

namespace saas::io {

enum class RunMode { baseline, saas, fixed };

const char* to_string(RunMode mode);

struct LayoutSpec {
    std::size_t grid_side = 8;
    std::size_t image_grid_side = 4;  // 0 = no image condition
    std::size_t text_len = 8;
    std::vector<Span> spans{{0, 4}, {4, 8}};

    TokenLayout build() const;
};

struct RunConfig {
    BackboneConfig backbone;
    LayoutSpec layout;
    SamplerConfig sampler;
    SaasConfig saas;
    std::string task = "editing";
    std::uint64_t condition_seed = 11;
    RunMode mode = RunMode::saas;
    double factor = 2.0;
};

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_config_text(const std::string& text);
KeyValues read_config_file(const std::filesystem::path& path);

/// Builds and validates a configuration; missing keys take defaults.
RunConfig config_from_kv(const KeyValues& values);

/// Every key with its resolved value; `config_from_kv` round-trips it.
KeyValues config_to_kv(const RunConfig& config);

/// Defaults, then the file (if any), then `overrides`.
RunConfig load_config(const std::filesystem::path& path, const KeyValues& overrides);

std::vector<std::string> known_config_keys();

}  // namespace saas::io
