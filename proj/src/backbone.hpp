// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "common.hpp"
#include "layout.hpp"

namespace saas {

struct BackboneConfig {
    int num_layers = 8;
    int num_heads = 4;
    int model_dim = 64;
    int vocab_size = 64;
    int ffn_mult = 2;
    std::uint64_t seed = 7;

    void validate() const;
    int head_dim() const noexcept { return model_dim / num_heads; }
};

/// Attention logit for (layer, query, key); replaces QK^T in rigged weights.
using LogitScript = std::function<double(int layer, std::size_t query, std::size_t key)>;

enum class WeightsMode { seeded, rigged };

struct LayerWeights {
    Matrix wq, wk, wv, wo;
    Matrix w1, w2;
    RowVector b1, b2;
};

struct BackboneWeights {
    BackboneConfig config;
    WeightsMode mode = WeightsMode::seeded;
    LogitScript script;

    std::vector<LayerWeights> layers;
    Matrix text_embedding;     // vocab x dim, row 0 is the padding token
    RowVector image_gain;      // pixel intensity -> embedding
    RowVector image_bias;
    Matrix segment_embedding;  // 3 x dim: image, text, noise
    Matrix latent_in;          // dim x dim
    Matrix velocity_out;       // dim x dim
};

inline constexpr int kPaddingToken = 0;

BackboneWeights init_backbone(const BackboneConfig& config);

/// Seeded weights whose attention probabilities come from `script` instead of
/// query/key projections.
BackboneWeights rig_backbone(const BackboneConfig& config, LogitScript script);

/// Raw condition content: image intensities in [0, 1] and text token ids.
struct ConditionInput {
    std::vector<double> image_pixels;
    std::vector<int> text_ids;

    bool operator==(const ConditionInput&) const = default;
};

/// Seeded image intensities and non-padding text ids sized to the layout.
ConditionInput make_condition_input(const TokenLayout& layout, int vocab_size, std::uint64_t seed);

/// White image and an all-padding instruction.
ConditionInput blank_condition_input(const TokenLayout& layout);

/// Real image with a blank instruction (the image-only guidance branch).
ConditionInput image_only_condition_input(const ConditionInput& real);

/// Embedded condition token states, num_conditions() x model_dim.
Matrix embed_conditions(const ConditionInput& input, const TokenLayout& layout,
                        const BackboneWeights& weights);

struct AttentionRecord {
    int step = 0;
    int layer = 0;
    int head = 0;
    Matrix matrix;
};

struct LatentState {
    int t = 0;
    Matrix values;  // grid_side^2 x model_dim
};

/// In-place attention transform applied after the softmax. The result must
/// stay row-stochastic with zeros at forbidden positions.
using AttentionIntervention = std::function<void(int layer, int head, Matrix& attention)>;

/// Receives the attention of every (layer, head) before any intervention.
using AttentionSink = std::function<void(const AttentionRecord&)>;

/// Condition rows entering each flagged layer are overwritten with `states[layer]`.
struct ConditionSubstitution {
    std::vector<bool> layers;
    std::vector<Matrix> states;
};

struct ForwardOptions {
    int step = 0;
    int num_steps = 1;
    const AttentionIntervention* intervention = nullptr;
    const AttentionSink* sink = nullptr;
    const ConditionSubstitution* substitution = nullptr;
    /// When set, receives the condition rows entering each layer.
    std::vector<Matrix>* condition_rows_out = nullptr;
};

/// One denoiser evaluation; returns the velocity for the noise tokens.
Matrix forward(const LatentState& latent, const Matrix& condition_states,
               const TokenLayout& layout, const BackboneWeights& weights,
               const AttentionPolicy& policy, const ForwardOptions& options = {});

Matrix guided_velocity(const Matrix& v_uncond, const Matrix& v_img, const Matrix& v_full,
                       double image_guidance, double text_guidance);

LatentState flow_step(const LatentState& latent, const Matrix& velocity, double dt);

struct SamplerConfig {
    int num_steps = 50;
    double image_guidance = 1.6;
    double text_guidance = 2.5;
    std::uint64_t seed = 7;

    void validate() const;
};

LatentState initial_latent(const TokenLayout& layout, const BackboneConfig& config,
                           std::uint64_t seed);

/// Hook consulted around the conditional pass of every sampling step.
class StepController {
public:
    virtual ~StepController() = default;

    /// Intervention for the conditional pass of `step`, or nullptr.
    virtual const AttentionIntervention* begin_step(int step) = 0;
    /// Layers whose records `end_step` needs; empty means none.
    virtual std::vector<int> record_layers(int step) const = 0;
    virtual void end_step(int step, std::span<const AttentionRecord> records) = 0;
};

enum class TraceCapture { none, all, selected };

struct SampleOptions {
    StepController* controller = nullptr;
    TraceCapture capture = TraceCapture::all;
    std::vector<int> capture_layers;  // for TraceCapture::selected
    /// Steps whose conditions are replaced by the blank input.
    std::function<bool(int step)> blank_at_step;
    /// Layers whose condition rows come from the blank input, every step.
    std::vector<bool> blank_layers;
};

struct SampleResult {
    LatentState latent;
    std::vector<AttentionRecord> trace;
};

SampleResult sample(const TokenLayout& layout, const BackboneWeights& weights,
                    const SamplerConfig& sampler, const ConditionInput& conditions,
                    const SampleOptions& options = {});

}  // namespace saas
