// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "layout.hpp"
#include "support/oracles.hpp"

using namespace saas;

TEST_CASE("full-resolution layout has 1024 noise tokens") {
    const TokenLayout l = build_layout(32, 32, 24, {{0, 12}, {12, 24}});
    CHECK(l.num_noise() == 1024);
    CHECK(l.image.size() == 1024);
    CHECK(l.total_len == 1024 + 1024 + 24);
    CHECK(l.num_instructions() == 2);
}

TEST_CASE("minimal layout without an image") {
    const TokenLayout l = build_layout(2, std::nullopt, 1, {{0, 1}});
    CHECK(l.total_len == 5);
    CHECK(l.image.empty());
    CHECK(l.text == Span{0, 1});
    CHECK(l.noise == Span{1, 5});
    CHECK(l.sub_instructions[0] == Span{0, 1});
}

TEST_CASE("sub-instruction spans become absolute text indices") {
    const TokenLayout l = build_layout(4, 2, 6, {{0, 2}, {3, 5}});
    CHECK(l.num_instructions() == 2);
    CHECK(l.image == Span{0, 4});
    CHECK(l.text == Span{4, 10});
    CHECK(l.noise == Span{10, 26});
    CHECK(l.sub_instructions[0] == Span{4, 6});
    CHECK(l.sub_instructions[1] == Span{7, 9});
    CHECK(l.num_conditions() == 10);
}

TEST_CASE("invalid layouts are rejected") {
    CHECK_THROWS_AS(build_layout(0, 2, 4, {{0, 1}}), InvalidArgument);
    CHECK_THROWS_AS(build_layout(2, 0, 4, {{0, 1}}), InvalidArgument);
    CHECK_THROWS_AS(build_layout(2, 2, 4, {{0, 3}, {2, 4}}), InvalidArgument);
    CHECK_THROWS_AS(build_layout(2, 2, 4, {{2, 2}}), InvalidArgument);
    CHECK_THROWS_AS(build_layout(2, 2, 4, {{3, 5}}), InvalidArgument);
}

TEST_CASE("layout partitions the sequence") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const TokenLayout l = oracle::random_layout(rng);
        CHECK(l.image.lo == 0);
        CHECK(l.text.lo == l.image.hi);
        CHECK(l.noise.lo == l.text.hi);
        CHECK(l.noise.hi == l.total_len);
        CHECK(l.num_noise() == l.grid_side * l.grid_side);
        CHECK(l.image.size() == l.image_grid_side * l.image_grid_side);
        for (std::size_t i = 0; i < l.num_instructions(); ++i) {
            const Span s = l.sub_instructions[i];
            CHECK(s.lo >= l.text.lo);
            CHECK(s.hi <= l.text.hi);
            if (i > 0)
                CHECK(l.sub_instructions[i - 1].hi <= s.lo);
        }
    }
}

namespace {

// Brute-force visibility: a key is visible if it does not come later, or if
// query and key share the image or noise block.
bool brute_visible(const TokenLayout& l, std::size_t q, std::size_t k) {
    auto block = [&](std::size_t i) {
        if (l.image.contains(i))
            return 0;
        if (l.text.contains(i))
            return 1;
        return 2;
    };
    return k <= q || (block(q) == block(k) && block(q) != 1);
}

}  // namespace

TEST_CASE("attention policy matches brute-force construction") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const TokenLayout l = oracle::random_layout(rng);
        const AttentionPolicy p = build_attention_policy(l);
        REQUIRE(p.size() == l.total_len);
        for (std::size_t q = 0; q < l.total_len; ++q) {
            CHECK(p.visible(q, q));
            for (std::size_t k = 0; k < l.total_len; ++k)
                CHECK(p.visible(q, k) == brute_visible(l, q, k));
        }
    }
}

TEST_CASE("minimal policy: text token sees only itself, noise block is dense") {
    const TokenLayout l = build_layout(2, std::nullopt, 1, {{0, 1}});
    const AttentionPolicy p = build_attention_policy(l);
    for (std::size_t k = 1; k < 5; ++k)
        CHECK_FALSE(p.visible(0, k));
    for (std::size_t q = 1; q < 5; ++q)
        for (std::size_t k = 0; k < 5; ++k)
            CHECK(p.visible(q, k));
}

TEST_CASE("image tokens never see the instruction") {
    const TokenLayout l = build_layout(2, 2, 3, {{0, 3}});
    const AttentionPolicy p = build_attention_policy(l);
    for (std::size_t q = l.image.lo; q < l.image.hi; ++q) {
        for (std::size_t k = l.image.lo; k < l.image.hi; ++k)
            CHECK(p.visible(q, k));
        for (std::size_t k = l.text.lo; k < l.total_len; ++k)
            CHECK_FALSE(p.visible(q, k));
    }
    for (std::size_t q = l.text.lo; q < l.text.hi; ++q)
        for (std::size_t k = l.image.lo; k < l.image.hi; ++k)
            CHECK(p.visible(q, k));
}

TEST_CASE("uniform attention slice") {
    // Four condition keys (1 image, 3 text) and four noise tokens; every row
    // is uniform over its visible keys, so noise rows hold 1/8 everywhere.
    const TokenLayout l = build_layout(2, 1, 3, {{0, 3}});
    REQUIRE(l.total_len == 8);
    Matrix a = Matrix::Zero(8, 8);
    for (Eigen::Index q = 0; q < 8; ++q) {
        const Eigen::Index visible = q < 1 ? 1 : (q < 4 ? q + 1 : 8);
        for (Eigen::Index k = 0; k < visible; ++k)
            a(q, k) = 1.0 / static_cast<double>(visible);
    }
    const CrossAttentionSlice s = slice_cross_attention(a, l);
    REQUIRE(s.values.rows() == 4);
    REQUIRE(s.values.cols() == 4);
    for (Eigen::Index i = 0; i < s.values.size(); ++i)
        CHECK(s.values.data()[i] == 0.125);
}

TEST_CASE("slice equals brute-force selection by index sets") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const TokenLayout l = oracle::random_layout(rng);
        const Matrix a = oracle::random_attention(build_attention_policy(l).allow, rng);
        const CrossAttentionSlice s = slice_cross_attention(a, l);
        REQUIRE(s.values.rows() == static_cast<Eigen::Index>(l.num_noise()));
        REQUIRE(s.values.cols() == static_cast<Eigen::Index>(l.num_conditions()));
        for (std::size_t i = 0; i < l.num_noise(); ++i)
            for (std::size_t j = 0; j < l.num_conditions(); ++j)
                CHECK(s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
                      a(static_cast<Eigen::Index>(l.noise.lo + i), static_cast<Eigen::Index>(j)));
    }
}

TEST_CASE("slice rejects malformed attention") {
    const TokenLayout l = build_layout(2, 1, 1, {{0, 1}});
    CHECK_THROWS_AS(slice_cross_attention(Matrix::Zero(3, 3), l), InvalidArgument);
    Matrix bad = Matrix::Constant(6, 6, 0.1);
    CHECK_THROWS_AS(slice_cross_attention(bad, l), InvalidArgument);
}

TEST_CASE("reshape is row-major") {
    const TokenLayout l = build_layout(2, std::nullopt, 1, {{0, 1}});
    CrossAttentionSlice s{Matrix(4, 1)};
    s.values << 1, 2, 3, 4;
    const SpatialMap m = reshape_to_spatial(s, 0, l.grid_side);
    CHECK(m.grid(0, 0) == 1);
    CHECK(m.grid(0, 1) == 2);
    CHECK(m.grid(1, 0) == 3);
    CHECK(m.grid(1, 1) == 4);

    s.values.setConstant(0.25);
    const SpatialMap c = reshape_to_spatial(s, 0, 2);
    CHECK((c.grid.array() == 0.25).all());
    CHECK_THROWS_AS(reshape_to_spatial(s, 1, 2), InvalidArgument);
    CHECK_THROWS_AS(reshape_to_spatial(s, 0, 3), InvalidArgument);
}

TEST_CASE("reshape matches independent index arithmetic and round-trips") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t g = 1; g <= 6; ++g) {
        CrossAttentionSlice s{Matrix(static_cast<Eigen::Index>(g * g), 3)};
        for (Eigen::Index i = 0; i < s.values.size(); ++i)
            s.values.data()[i] = unit(rng);
        for (std::size_t token = 0; token < 3; ++token) {
            const SpatialMap m = reshape_to_spatial(s, token, g);
            for (std::size_t i = 0; i < g * g; ++i)
                CHECK(m.grid(static_cast<Eigen::Index>(i / g), static_cast<Eigen::Index>(i % g)) ==
                      s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(token)));
            CHECK(flatten_spatial(m.grid) == s.values.col(static_cast<Eigen::Index>(token)));
            CHECK(unflatten_spatial(flatten_spatial(m.grid), g) == m.grid);
        }
    }
}
