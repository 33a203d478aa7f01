// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "backbone.hpp"

namespace saas {

/// Condition token states of a white image and an all-padding instruction.
struct BlankInput {
    Matrix states;
};

BlankInput make_blank_input(const TokenLayout& layout, const BackboneWeights& weights);

/// Cosine similarity of the flattened latents.
double latent_similarity(const LatentState& a, const LatentState& b);

/// top_down perturbs the first (shallowest) layers, bottom_up the last.
enum class LayerDirection { top_down, bottom_up };

const char* to_string(LayerDirection direction);

std::vector<bool> perturbed_layers(int num_layers, LayerDirection direction, int n_layers);

struct PerturbationContext {
    const TokenLayout& layout;
    const BackboneWeights& weights;
    const SamplerConfig& sampler;
    const ConditionInput& conditions;
};

LatentState run_baseline(const PerturbationContext& ctx);

/// Blank conditions from `step_s` onward (or only at `step_s` when
/// `single_step`).
LatentState run_step_perturbation(const PerturbationContext& ctx, int step_s,
                                  bool single_step = false);

LatentState run_layer_perturbation(const PerturbationContext& ctx, LayerDirection direction,
                                   int n_layers);

struct SweepPoint {
    int parameter = 0;
    double similarity = 0.0;
};

struct SimilarityReport {
    std::string parameter_name;
    std::vector<SweepPoint> curve;
    std::string baseline_id;
};

SweepPoint perturb_steps(const PerturbationContext& ctx, const LatentState& baseline, int step_s,
                         bool single_step = false);

SweepPoint perturb_layers(const PerturbationContext& ctx, const LatentState& baseline,
                          LayerDirection direction, int n_layers);

SimilarityReport sweep_steps(const PerturbationContext& ctx, const LatentState& baseline,
                             const std::vector<int>& steps, bool single_step = false);

SimilarityReport sweep_layers(const PerturbationContext& ctx, const LatentState& baseline,
                              LayerDirection direction, const std::vector<int>& counts);

}  // namespace saas
