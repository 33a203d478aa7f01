// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace saas {

/// Half-open token index range [lo, hi).
struct Span {
    std::size_t lo = 0;
    std::size_t hi = 0;

    std::size_t size() const noexcept { return hi - lo; }
    bool empty() const noexcept { return hi == lo; }
    bool contains(std::size_t i) const noexcept { return i >= lo && i < hi; }
    bool operator==(const Span&) const = default;
};

/// Joint sequence partition, ordered [image, text, noise].
///
/// Condition tokens (image then text) occupy indices [0, num_conditions()),
/// so a condition token's absolute index is also its column in the
/// cross-attention slice. Sub-instruction spans are stored as absolute
/// indices inside `text`.
struct TokenLayout {
    std::size_t total_len = 0;
    Span image;
    Span text;
    Span noise;
    std::vector<Span> sub_instructions;
    std::size_t grid_side = 0;
    std::size_t image_grid_side = 0;

    std::size_t num_conditions() const noexcept { return image.size() + text.size(); }
    std::size_t num_noise() const noexcept { return noise.size(); }
    std::size_t num_instructions() const noexcept { return sub_instructions.size(); }
    bool operator==(const TokenLayout&) const = default;
};

/// `sub_instruction_spans` are relative to the text segment.
TokenLayout build_layout(std::size_t noise_grid_side,
                         std::optional<std::size_t> image_grid_side,
                         std::size_t text_len,
                         const std::vector<Span>& sub_instruction_spans);

/// Query x key visibility. Causal by position, bidirectional inside the
/// image and noise blocks.
struct AttentionPolicy {
    BoolGrid allow;

    bool visible(std::size_t query, std::size_t key) const { return allow(query, key); }
    std::size_t size() const noexcept { return static_cast<std::size_t>(allow.rows()); }
};

AttentionPolicy build_attention_policy(const TokenLayout& layout);

/// Noise-query x condition-key block of the joint attention matrix.
struct CrossAttentionSlice {
    Matrix values;
};

CrossAttentionSlice slice_cross_attention(const Matrix& attention, const TokenLayout& layout);

/// Subject tag of a spatial map: a condition token ("e12"), a sub-instruction
/// ("T0"), or the input image ("I").
struct SpatialMap {
    Matrix grid;
    std::string subject;
};

SpatialMap reshape_to_spatial(const CrossAttentionSlice& slice, std::size_t token_index,
                              std::size_t grid_side);

/// Row-major flattening, inverse of `reshape_to_spatial`.
Vector flatten_spatial(const Matrix& grid);
Matrix unflatten_spatial(const Vector& column, std::size_t grid_side);

}  // namespace saas
