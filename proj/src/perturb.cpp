// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "perturb.hpp"

#include <algorithm>
#include <cmath>

namespace saas {

BlankInput make_blank_input(const TokenLayout& layout, const BackboneWeights& weights) {
    return {embed_conditions(blank_condition_input(layout), layout, weights)};
}

double latent_similarity(const LatentState& a, const LatentState& b) {
    if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols())
        throw InvalidArgument("latents differ in shape");
    const double na = a.values.norm();
    const double nb = b.values.norm();
    if (!(na > 0.0) || !(nb > 0.0))
        throw InvalidArgument("cosine similarity of a zero-norm latent");
    if (&a == &b || a.values == b.values)
        return 1.0;
    const double cos = a.values.cwiseProduct(b.values).sum() / (na * nb);
    return std::clamp(cos, -1.0, 1.0);
}

const char* to_string(LayerDirection direction) {
    return direction == LayerDirection::top_down ? "top_down" : "bottom_up";
}

std::vector<bool> perturbed_layers(int num_layers, LayerDirection direction, int n_layers) {
    if (n_layers < 0 || n_layers > num_layers)
        throw InvalidArgument("perturbed layer count " + std::to_string(n_layers) +
                              " outside [0, " + std::to_string(num_layers) + "]");
    std::vector<bool> flags(static_cast<std::size_t>(num_layers), false);
    for (int i = 0; i < n_layers; ++i) {
        const int l = direction == LayerDirection::top_down ? i : num_layers - 1 - i;
        flags[static_cast<std::size_t>(l)] = true;
    }
    return flags;
}

LatentState run_baseline(const PerturbationContext& ctx) {
    SampleOptions options;
    options.capture = TraceCapture::none;
    return sample(ctx.layout, ctx.weights, ctx.sampler, ctx.conditions, options).latent;
}

LatentState run_step_perturbation(const PerturbationContext& ctx, int step_s, bool single_step) {
    if (step_s < 0 || step_s > ctx.sampler.num_steps)
        throw InvalidArgument("perturbation step " + std::to_string(step_s) + " outside [0, " +
                              std::to_string(ctx.sampler.num_steps) + "]");
    SampleOptions options;
    options.capture = TraceCapture::none;
    if (single_step)
        options.blank_at_step = [step_s](int step) { return step == step_s; };
    else
        options.blank_at_step = [step_s](int step) { return step >= step_s; };
    return sample(ctx.layout, ctx.weights, ctx.sampler, ctx.conditions, options).latent;
}

LatentState run_layer_perturbation(const PerturbationContext& ctx, LayerDirection direction,
                                   int n_layers) {
    SampleOptions options;
    options.capture = TraceCapture::none;
    options.blank_layers = perturbed_layers(ctx.weights.config.num_layers, direction, n_layers);
    return sample(ctx.layout, ctx.weights, ctx.sampler, ctx.conditions, options).latent;
}

SweepPoint perturb_steps(const PerturbationContext& ctx, const LatentState& baseline, int step_s,
                         bool single_step) {
    return {step_s, latent_similarity(baseline, run_step_perturbation(ctx, step_s, single_step))};
}

SweepPoint perturb_layers(const PerturbationContext& ctx, const LatentState& baseline,
                          LayerDirection direction, int n_layers) {
    return {n_layers, latent_similarity(baseline, run_layer_perturbation(ctx, direction, n_layers))};
}

SimilarityReport sweep_steps(const PerturbationContext& ctx, const LatentState& baseline,
                             const std::vector<int>& steps, bool single_step) {
    SimilarityReport report;
    report.parameter_name = "step";
    for (int s : steps)
        report.curve.push_back(perturb_steps(ctx, baseline, s, single_step));
    return report;
}

SimilarityReport sweep_layers(const PerturbationContext& ctx, const LatentState& baseline,
                              LayerDirection direction, const std::vector<int>& counts) {
    SimilarityReport report;
    report.parameter_name = "layers";
    for (int n : counts)
        report.curve.push_back(perturb_layers(ctx, baseline, direction, n));
    return report;
}

}  // namespace saas
