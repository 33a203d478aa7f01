// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "perturb.hpp"

using namespace saas;

namespace {

bool same_bytes(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

LatentState latent(std::initializer_list<double> v) {
    LatentState s;
    s.values = Matrix(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v)
        s.values(0, i++) = x;
    return s;
}

struct Lab {
    TokenLayout layout = build_layout(3, 2, 4, {{0, 2}, {2, 4}});
    BackboneWeights weights = [] {
        BackboneConfig c;
        c.num_layers = 4;
        c.num_heads = 2;
        c.model_dim = 16;
        c.vocab_size = 16;
        return init_backbone(c);
    }();
    SamplerConfig sampler = [] {
        SamplerConfig s;
        s.num_steps = 10;
        return s;
    }();
    ConditionInput input = make_condition_input(layout, 16, 5);
    PerturbationContext ctx{layout, weights, sampler, input};
};

}  // namespace

TEST_CASE("cosine similarity") {
    const LatentState x = latent({0.3, -1.2, 2.0});
    const LatentState neg = latent({-0.3, 1.2, -2.0});
    CHECK(latent_similarity(x, x) == 1.0);
    CHECK(latent_similarity(x, neg) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(latent_similarity(latent({1, 0}), latent({1, 1})) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(latent_similarity(x, latent({0, 0, 0})), InvalidArgument);
    CHECK_THROWS_AS(latent_similarity(x, latent({1, 2})), InvalidArgument);
}

TEST_CASE("cosine similarity is symmetric, bounded and scale invariant") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> scale(0.001, 1000.0);
    for (int trial = 0; trial < 500; ++trial) {
        LatentState a, b;
        a.values = Matrix(4, 3);
        b.values = Matrix(4, 3);
        for (Eigen::Index i = 0; i < 12; ++i) {
            a.values.data()[i] = n(rng);
            b.values.data()[i] = n(rng);
        }
        const double ab = latent_similarity(a, b);
        CHECK(ab == latent_similarity(b, a));
        CHECK(ab >= -1.0);
        CHECK(ab <= 1.0);
        LatentState scaled = a;
        scaled.values *= scale(rng);
        CHECK(latent_similarity(scaled, b) == doctest::Approx(ab).epsilon(1e-12));
    }
}

TEST_CASE("layer selection by direction") {
    CHECK(perturbed_layers(4, LayerDirection::top_down, 0) == std::vector<bool>(4, false));
    CHECK(perturbed_layers(4, LayerDirection::top_down, 1) == std::vector<bool>{true, false, false, false});
    CHECK(perturbed_layers(4, LayerDirection::bottom_up, 1) == std::vector<bool>{false, false, false, true});
    CHECK(perturbed_layers(4, LayerDirection::top_down, 4) == perturbed_layers(4, LayerDirection::bottom_up, 4));
    CHECK_THROWS_AS(perturbed_layers(4, LayerDirection::top_down, 5), InvalidArgument);
    CHECK_THROWS_AS(perturbed_layers(4, LayerDirection::top_down, -1), InvalidArgument);
    CHECK(std::string(to_string(LayerDirection::top_down)) == "top_down");
    CHECK(std::string(to_string(LayerDirection::bottom_up)) == "bottom_up");
}

TEST_CASE("blank input is deterministic and content independent") {
    const Lab lab;
    const BlankInput a = make_blank_input(lab.layout, lab.weights);
    const BlankInput b = make_blank_input(lab.layout, lab.weights);
    CHECK(same_bytes(a.states, b.states));
    CHECK(same_bytes(a.states, embed_conditions(blank_condition_input(lab.layout), lab.layout, lab.weights)));

    const TokenLayout no_image = build_layout(3, std::nullopt, 4, {{0, 4}});
    const BlankInput text_only = make_blank_input(no_image, lab.weights);
    CHECK(text_only.states.rows() == 4);
}

TEST_CASE("blank input run differs from the real run") {
    const Lab lab;
    const LatentState real = run_baseline(lab.ctx);
    const ConditionInput blank = blank_condition_input(lab.layout);
    const LatentState other = run_baseline({lab.layout, lab.weights, lab.sampler, blank});
    CHECK_FALSE(same_bytes(real.values, other.values));
}

TEST_CASE("step perturbation endpoints") {
    const Lab lab;
    const LatentState base = run_baseline(lab.ctx);
    const LatentState late = run_step_perturbation(lab.ctx, lab.sampler.num_steps);
    CHECK(same_bytes(base.values, late.values));
    CHECK(perturb_steps(lab.ctx, base, lab.sampler.num_steps).similarity == 1.0);

    const ConditionInput blank = blank_condition_input(lab.layout);
    SampleOptions none;
    none.capture = TraceCapture::none;
    const LatentState independent = sample(lab.layout, lab.weights, lab.sampler, blank, none).latent;
    CHECK(same_bytes(run_step_perturbation(lab.ctx, 0).values, independent.values));

    CHECK_THROWS_AS(run_step_perturbation(lab.ctx, 11), InvalidArgument);
    CHECK_THROWS_AS(run_step_perturbation(lab.ctx, -1), InvalidArgument);
}

TEST_CASE("single-step perturbation touches one step only") {
    const Lab lab;
    const LatentState base = run_baseline(lab.ctx);
    const LatentState sustained = run_step_perturbation(lab.ctx, 3);
    const LatentState single = run_step_perturbation(lab.ctx, 3, true);
    CHECK_FALSE(same_bytes(single.values, sustained.values));
    CHECK_FALSE(same_bytes(single.values, base.values));
    CHECK(same_bytes(run_step_perturbation(lab.ctx, 9, true).values,
                     run_step_perturbation(lab.ctx, 9).values));
}

TEST_CASE("layer perturbation endpoints") {
    const Lab lab;
    const LatentState base = run_baseline(lab.ctx);
    for (LayerDirection d : {LayerDirection::top_down, LayerDirection::bottom_up}) {
        CHECK(same_bytes(run_layer_perturbation(lab.ctx, d, 0).values, base.values));
        CHECK(perturb_layers(lab.ctx, base, d, 0).similarity == 1.0);
    }
    CHECK(same_bytes(run_layer_perturbation(lab.ctx, LayerDirection::top_down, 4).values,
                     run_layer_perturbation(lab.ctx, LayerDirection::bottom_up, 4).values));
}

TEST_CASE("layer perturbation equals an explicit substitution list") {
    const Lab lab;
    for (int n = 1; n <= 3; ++n) {
        SampleOptions explicit_list;
        explicit_list.capture = TraceCapture::none;
        explicit_list.blank_layers.assign(4, false);
        for (int l = 4 - n; l < 4; ++l)
            explicit_list.blank_layers[static_cast<std::size_t>(l)] = true;
        const LatentState expected = sample(lab.layout, lab.weights, lab.sampler, lab.input, explicit_list).latent;
        CHECK(same_bytes(run_layer_perturbation(lab.ctx, LayerDirection::bottom_up, n).values, expected.values));
    }
}

TEST_CASE("sweeps emit one point per parameter and are deterministic") {
    const Lab lab;
    const LatentState base = run_baseline(lab.ctx);
    const SimilarityReport steps = sweep_steps(lab.ctx, base, {0, 5, 10});
    REQUIRE(steps.curve.size() == 3);
    CHECK(steps.curve[2].parameter == 10);
    CHECK(steps.curve[2].similarity == 1.0);
    CHECK(steps.parameter_name == "step");
    const SimilarityReport again = sweep_steps(lab.ctx, base, {0, 5, 10});
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(steps.curve[i].similarity == again.curve[i].similarity);

    for (LayerDirection d : {LayerDirection::top_down, LayerDirection::bottom_up}) {
        const SimilarityReport layers = sweep_layers(lab.ctx, base, d, {0, 1, 2, 3, 4});
        REQUIRE(layers.curve.size() == 5);
        CHECK(layers.curve[0].similarity == 1.0);
        for (const SweepPoint& p : layers.curve) {
            CHECK(p.similarity >= -1.0);
            CHECK(p.similarity <= 1.0);
        }
    }
}
