// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "backbone.hpp"
#include "io/config.hpp"
#include "layout.hpp"
#include "perturb.hpp"

namespace saas::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);

/// Sorted keys, two-space indent, trailing newline.
std::string canonical_json(const json& value);

std::string fnv1a_hex(std::string_view bytes);

json layout_to_json(const LayoutSpec& layout);
LayoutSpec layout_from_json(const json& value);

// Raw matrices: two little-endian u64 dims (rows, cols), then rows*cols
// little-endian f64 in row-major order.
std::string encode_matrix(const Matrix& m);
Matrix decode_matrix(std::string_view bytes);
void write_matrix(const fs::path& path, const Matrix& m);
Matrix read_matrix(const fs::path& path);

enum class PgmFormat { plain, raw };  // P2, P5

struct PgmImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::uint32_t maxval = 0;
    std::vector<std::uint32_t> pixels;  // row-major
};

void write_pgm(const fs::path& path, const PgmImage& image, PgmFormat format);
PgmImage read_pgm(const fs::path& path);

/// Min-max scaled to 0..65535, round to nearest.
PgmImage map_to_pgm(const Matrix& map);
PgmImage mask_to_pgm(const BoolGrid& mask);
Matrix pgm_to_unit(const PgmImage& image);

/// Trace directory: one raw matrix per record plus manifest.json listing
/// {step, layer, head, rows, cols, dtype, file}.
void write_trace(const fs::path& dir, const std::vector<AttentionRecord>& records);
json read_trace_manifest(const fs::path& dir);
/// Loads records for `step` restricted to `layers` (all when empty).
std::vector<AttentionRecord> read_trace(const fs::path& dir, int step,
                                        const std::vector<int>& layers = {});

std::string csv_field(std::string_view field);
void write_curve_csv(const fs::path& path, const SimilarityReport& report);

}  // namespace saas::io
