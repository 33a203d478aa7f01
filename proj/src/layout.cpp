// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "layout.hpp"

#include <algorithm>
#include <cmath>

namespace saas {

TokenLayout build_layout(std::size_t noise_grid_side,
                         std::optional<std::size_t> image_grid_side,
                         std::size_t text_len,
                         const std::vector<Span>& sub_instruction_spans) {
    if (noise_grid_side == 0)
        throw InvalidArgument("noise grid side must be at least 1");
    if (image_grid_side && *image_grid_side == 0)
        throw InvalidArgument("image grid side must be at least 1 when an image is present");

    std::vector<Span> sorted = sub_instruction_spans;
    for (const Span& s : sorted) {
        if (s.lo >= s.hi)
            throw InvalidArgument("sub-instruction span [" + std::to_string(s.lo) + ", " +
                                  std::to_string(s.hi) + ") is empty or reversed");
        if (s.hi > text_len)
            throw InvalidArgument("sub-instruction span [" + std::to_string(s.lo) + ", " +
                                  std::to_string(s.hi) + ") exceeds text length " +
                                  std::to_string(text_len));
    }
    std::sort(sorted.begin(), sorted.end(), [](const Span& a, const Span& b) { return a.lo < b.lo; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i].lo < sorted[i - 1].hi)
            throw InvalidArgument("sub-instruction spans overlap");
    }

    TokenLayout layout;
    const std::size_t image_tokens = image_grid_side ? (*image_grid_side) * (*image_grid_side) : 0;
    layout.image = {0, image_tokens};
    layout.text = {image_tokens, image_tokens + text_len};
    layout.noise = {layout.text.hi, layout.text.hi + noise_grid_side * noise_grid_side};
    layout.total_len = layout.noise.hi;
    layout.grid_side = noise_grid_side;
    layout.image_grid_side = image_grid_side.value_or(0);
    layout.sub_instructions.reserve(sub_instruction_spans.size());
    // caller order is kept: T_1..T_k is the order the instructions were given
    for (const Span& s : sub_instruction_spans)
        layout.sub_instructions.push_back({layout.text.lo + s.lo, layout.text.lo + s.hi});
    return layout;
}

AttentionPolicy build_attention_policy(const TokenLayout& layout) {
    const auto n = static_cast<Eigen::Index>(layout.total_len);
    AttentionPolicy policy;
    policy.allow = BoolGrid::Constant(n, n, false);
    auto same_block = [&](std::size_t q, std::size_t k) {
        return (layout.image.contains(q) && layout.image.contains(k)) ||
               (layout.noise.contains(q) && layout.noise.contains(k));
    };
    for (std::size_t q = 0; q < layout.total_len; ++q)
        for (std::size_t k = 0; k < layout.total_len; ++k)
            policy.allow(q, k) = k <= q || same_block(q, k);
    return policy;
}

CrossAttentionSlice slice_cross_attention(const Matrix& attention, const TokenLayout& layout) {
    const auto n = static_cast<Eigen::Index>(layout.total_len);
    if (attention.rows() != n || attention.cols() != n)
        throw InvalidArgument("attention matrix is " + std::to_string(attention.rows()) + "x" +
                              std::to_string(attention.cols()) + ", layout expects " +
                              std::to_string(n) + "x" + std::to_string(n));
    for (Eigen::Index r = 0; r < n; ++r) {
        if (std::abs(attention.row(r).sum() - 1.0) > kStochasticTolerance)
            throw InvalidArgument("attention row " + std::to_string(r) + " is not stochastic");
    }
    CrossAttentionSlice slice;
    slice.values = attention.block(static_cast<Eigen::Index>(layout.noise.lo), 0,
                                   static_cast<Eigen::Index>(layout.num_noise()),
                                   static_cast<Eigen::Index>(layout.num_conditions()));
    return slice;
}

SpatialMap reshape_to_spatial(const CrossAttentionSlice& slice, std::size_t token_index,
                              std::size_t grid_side) {
    if (token_index >= static_cast<std::size_t>(slice.values.cols()))
        throw InvalidArgument("token index " + std::to_string(token_index) +
                              " outside cross-attention slice with " +
                              std::to_string(slice.values.cols()) + " columns");
    if (grid_side * grid_side != static_cast<std::size_t>(slice.values.rows()))
        throw InvalidArgument("grid side does not match slice row count");
    return {unflatten_spatial(slice.values.col(static_cast<Eigen::Index>(token_index)), grid_side),
            "e" + std::to_string(token_index)};
}

Vector flatten_spatial(const Matrix& grid) {
    return Eigen::Map<const Vector>(grid.data(), grid.size());
}

Matrix unflatten_spatial(const Vector& column, std::size_t grid_side) {
    const auto g = static_cast<Eigen::Index>(grid_side);
    if (column.size() != g * g)
        throw InvalidArgument("column length does not match grid side");
    return Eigen::Map<const Matrix>(column.data(), g, g);
}

}  // namespace saas
