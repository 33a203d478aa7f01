// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rng.hpp"

namespace saas {

namespace {

Matrix random_matrix(detail::Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = scale * rng.normal();
    return m;
}

RowVector random_row(detail::Rng& rng, Eigen::Index cols, double scale) {
    RowVector v(cols);
    for (Eigen::Index i = 0; i < cols; ++i)
        v[i] = scale * rng.normal();
    return v;
}

RowVector sinusoid(double position, int dim) {
    RowVector e(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        e[2 * i] = std::sin(position * freq);
        e[2 * i + 1] = std::cos(position * freq);
    }
    if (dim % 2)
        e[dim - 1] = 0.0;
    return e;
}

Matrix layer_norm(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + 1e-5);
    }
    return out;
}

double gelu(double x) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

void masked_softmax_rows(Matrix& logits, const AttentionPolicy& policy) {
    for (Eigen::Index q = 0; q < logits.rows(); ++q) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < logits.cols(); ++k)
            if (policy.allow(q, k))
                max_logit = std::max(max_logit, logits(q, k));
        double total = 0.0;
        for (Eigen::Index k = 0; k < logits.cols(); ++k) {
            if (policy.allow(q, k)) {
                logits(q, k) = std::exp(logits(q, k) - max_logit);
                total += logits(q, k);
            } else {
                logits(q, k) = 0.0;
            }
        }
        logits.row(q) /= total;
    }
}

Matrix attention_probs(const BackboneWeights& weights, const AttentionPolicy& policy, int layer,
                       const Matrix& queries, const Matrix& keys) {
    const auto n = static_cast<Eigen::Index>(policy.size());
    Matrix logits(n, n);
    if (weights.mode == WeightsMode::rigged) {
        for (Eigen::Index q = 0; q < n; ++q) {
            for (Eigen::Index k = 0; k < n; ++k) {
                if (!policy.allow(q, k)) {
                    logits(q, k) = 0.0;
                    continue;
                }
                const double v = weights.script(layer, static_cast<std::size_t>(q),
                                                static_cast<std::size_t>(k));
                if (!std::isfinite(v))
                    throw InvalidArgument("logit script returned a non-finite value at layer " +
                                          std::to_string(layer) + " (" + std::to_string(q) +
                                          ", " + std::to_string(k) + ")");
                logits(q, k) = v;
            }
        }
    } else {
        logits = (queries * keys.transpose()) / std::sqrt(static_cast<double>(queries.cols()));
    }
    masked_softmax_rows(logits, policy);
    return logits;
}

void check_attention_contract(const Matrix& attention, const AttentionPolicy& policy, int layer) {
    for (Eigen::Index q = 0; q < attention.rows(); ++q) {
        double total = 0.0;
        for (Eigen::Index k = 0; k < attention.cols(); ++k) {
            const double v = attention(q, k);
            if (!std::isfinite(v) || v < 0.0)
                throw NumericalError(layer, "intervention produced a negative or non-finite "
                                            "attention weight at layer " + std::to_string(layer));
            if (!policy.allow(q, k) && v != 0.0)
                throw NumericalError(layer, "intervention wrote to a forbidden attention "
                                            "position at layer " + std::to_string(layer));
            total += v;
        }
        if (std::abs(total - 1.0) > kStochasticTolerance)
            throw NumericalError(layer, "intervention broke row stochasticity at layer " +
                                            std::to_string(layer) + ", row " + std::to_string(q));
    }
}

}  // namespace

void BackboneConfig::validate() const {
    if (num_layers < 2)
        throw InvalidArgument("num_layers must be at least 2");
    if (num_heads < 1 || model_dim < 1 || model_dim % num_heads != 0)
        throw InvalidArgument("model_dim must be a positive multiple of num_heads");
    if (vocab_size < 2)
        throw InvalidArgument("vocab_size must be at least 2");
    if (ffn_mult < 1)
        throw InvalidArgument("ffn_mult must be at least 1");
}

void SamplerConfig::validate() const {
    if (num_steps < 1)
        throw InvalidArgument("num_steps must be at least 1");
    if (!std::isfinite(image_guidance) || !std::isfinite(text_guidance))
        throw InvalidArgument("guidance scales must be finite");
}

BackboneWeights init_backbone(const BackboneConfig& config) {
    config.validate();
    detail::Rng rng(config.seed);
    const int d = config.model_dim;
    const int f = config.model_dim * config.ffn_mult;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const double inv_sqrt_f = 1.0 / std::sqrt(static_cast<double>(f));

    BackboneWeights w;
    w.config = config;
    w.mode = WeightsMode::seeded;
    w.text_embedding = random_matrix(rng, config.vocab_size, d, 1.0);
    w.image_gain = random_row(rng, d, 1.0);
    w.image_bias = random_row(rng, d, 0.5);
    w.segment_embedding = random_matrix(rng, 3, d, 0.5);
    w.latent_in = random_matrix(rng, d, d, inv_sqrt_d);
    w.velocity_out = random_matrix(rng, d, d, inv_sqrt_d);
    w.layers.resize(static_cast<std::size_t>(config.num_layers));
    for (LayerWeights& lw : w.layers) {
        lw.wq = random_matrix(rng, d, d, inv_sqrt_d);
        lw.wk = random_matrix(rng, d, d, inv_sqrt_d);
        lw.wv = random_matrix(rng, d, d, inv_sqrt_d);
        lw.wo = random_matrix(rng, d, d, inv_sqrt_d);
        lw.w1 = random_matrix(rng, d, f, inv_sqrt_d);
        lw.b1 = random_row(rng, f, 0.1);
        lw.w2 = random_matrix(rng, f, d, inv_sqrt_f);
        lw.b2 = random_row(rng, d, 0.1);
    }
    return w;
}

BackboneWeights rig_backbone(const BackboneConfig& config, LogitScript script) {
    if (!script)
        throw InvalidArgument("rigged backbone needs a logit script");
    BackboneWeights w = init_backbone(config);
    w.mode = WeightsMode::rigged;
    w.script = std::move(script);
    return w;
}

ConditionInput make_condition_input(const TokenLayout& layout, int vocab_size, std::uint64_t seed) {
    if (vocab_size < 2)
        throw InvalidArgument("vocab_size must be at least 2");
    detail::Rng rng(seed);
    ConditionInput input;
    input.image_pixels.resize(layout.image.size());
    for (double& p : input.image_pixels)
        p = rng.uniform();
    input.text_ids.resize(layout.text.size());
    for (int& id : input.text_ids)
        id = 1 + static_cast<int>(rng.next() % static_cast<std::uint64_t>(vocab_size - 1));
    return input;
}

ConditionInput blank_condition_input(const TokenLayout& layout) {
    return {std::vector<double>(layout.image.size(), 1.0),
            std::vector<int>(layout.text.size(), kPaddingToken)};
}

ConditionInput image_only_condition_input(const ConditionInput& real) {
    return {real.image_pixels, std::vector<int>(real.text_ids.size(), kPaddingToken)};
}

Matrix embed_conditions(const ConditionInput& input, const TokenLayout& layout,
                        const BackboneWeights& weights) {
    if (input.image_pixels.size() != layout.image.size() ||
        input.text_ids.size() != layout.text.size())
        throw InvalidArgument("condition input does not match the layout");
    const int d = weights.config.model_dim;
    Matrix states(static_cast<Eigen::Index>(layout.num_conditions()), d);
    for (std::size_t i = 0; i < layout.image.size(); ++i) {
        states.row(static_cast<Eigen::Index>(layout.image.lo + i)) =
            input.image_pixels[i] * weights.image_gain + weights.image_bias +
            weights.segment_embedding.row(0) + sinusoid(static_cast<double>(i), d);
    }
    for (std::size_t j = 0; j < layout.text.size(); ++j) {
        const int id = input.text_ids[j];
        if (id < 0 || id >= weights.config.vocab_size)
            throw InvalidArgument("text token id " + std::to_string(id) + " outside vocabulary");
        states.row(static_cast<Eigen::Index>(layout.text.lo + j)) =
            weights.text_embedding.row(id) + weights.segment_embedding.row(1) +
            sinusoid(static_cast<double>(j), d);
    }
    return states;
}

Matrix forward(const LatentState& latent, const Matrix& condition_states,
               const TokenLayout& layout, const BackboneWeights& weights,
               const AttentionPolicy& policy, const ForwardOptions& options) {
    const int d = weights.config.model_dim;
    const int dh = weights.config.head_dim();
    const auto n_cond = static_cast<Eigen::Index>(layout.num_conditions());
    const auto n_noise = static_cast<Eigen::Index>(layout.num_noise());
    const auto total = static_cast<Eigen::Index>(layout.total_len);
    if (latent.values.rows() != n_noise || latent.values.cols() != d)
        throw InvalidArgument("latent shape does not match layout and model_dim");
    if (condition_states.rows() != n_cond || condition_states.cols() != d)
        throw InvalidArgument("condition states do not match layout and model_dim");
    if (static_cast<Eigen::Index>(policy.size()) != total)
        throw InvalidArgument("attention policy does not match layout");

    Matrix h(total, d);
    h.topRows(n_cond) = condition_states;
    const double t_cont = static_cast<double>(latent.t) / options.num_steps;
    const RowVector t_emb = sinusoid(1000.0 * t_cont, d);
    const Matrix noise_in = latent.values * weights.latent_in;
    for (Eigen::Index c = 0; c < n_noise; ++c) {
        h.row(n_cond + c) = noise_in.row(c) + weights.segment_embedding.row(2) +
                            sinusoid(static_cast<double>(c), d) + t_emb;
    }

    for (int l = 0; l < weights.config.num_layers; ++l) {
        const LayerWeights& lw = weights.layers[static_cast<std::size_t>(l)];
        if (options.substitution && options.substitution->layers[static_cast<std::size_t>(l)])
            h.topRows(n_cond) = options.substitution->states[static_cast<std::size_t>(l)];
        if (options.condition_rows_out)
            options.condition_rows_out->push_back(h.topRows(n_cond));

        const Matrix a = layer_norm(h);
        const Matrix q = a * lw.wq;
        const Matrix k = a * lw.wk;
        const Matrix v = a * lw.wv;
        Matrix mixed(total, d);
        for (int head = 0; head < weights.config.num_heads; ++head) {
            const Eigen::Index c0 = static_cast<Eigen::Index>(head) * dh;
            Matrix probs = attention_probs(weights, policy, l, q.middleCols(c0, dh),
                                           k.middleCols(c0, dh));
            if (options.sink)
                (*options.sink)(AttentionRecord{options.step, l, head, probs});
            if (options.intervention) {
                (*options.intervention)(l, head, probs);
                check_attention_contract(probs, policy, l);
            }
            mixed.middleCols(c0, dh) = probs * v.middleCols(c0, dh);
        }
        h += mixed * lw.wo;

        Matrix hidden = layer_norm(h) * lw.w1;
        hidden.rowwise() += lw.b1;
        hidden = hidden.unaryExpr(&gelu);
        Matrix ff = hidden * lw.w2;
        ff.rowwise() += lw.b2;
        h += ff;

        if (!h.allFinite())
            throw NumericalError(l, "non-finite hidden state after layer " + std::to_string(l));
    }

    Matrix velocity = layer_norm(h.bottomRows(n_noise)) * weights.velocity_out;
    if (!velocity.allFinite())
        throw NumericalError(weights.config.num_layers - 1, "non-finite velocity");
    return velocity;
}

Matrix guided_velocity(const Matrix& v_uncond, const Matrix& v_img, const Matrix& v_full,
                       double image_guidance, double text_guidance) {
    if (v_uncond.rows() != v_img.rows() || v_uncond.cols() != v_img.cols() ||
        v_uncond.rows() != v_full.rows() || v_uncond.cols() != v_full.cols())
        throw InvalidArgument("guidance inputs differ in shape");
    return v_uncond + image_guidance * (v_img - v_uncond) + text_guidance * (v_full - v_img);
}

LatentState flow_step(const LatentState& latent, const Matrix& velocity, double dt) {
    if (!(dt > 0.0))
        throw InvalidArgument("flow step needs dt > 0");
    if (velocity.rows() != latent.values.rows() || velocity.cols() != latent.values.cols())
        throw InvalidArgument("velocity shape does not match latent");
    return {latent.t - 1, latent.values + dt * velocity};
}

LatentState initial_latent(const TokenLayout& layout, const BackboneConfig& config,
                           std::uint64_t seed) {
    detail::Rng rng(seed);
    LatentState latent;
    latent.values = random_matrix(rng, static_cast<Eigen::Index>(layout.num_noise()),
                                  config.model_dim, 1.0);
    return latent;
}

SampleResult sample(const TokenLayout& layout, const BackboneWeights& weights,
                    const SamplerConfig& sampler, const ConditionInput& conditions,
                    const SampleOptions& options) {
    sampler.validate();
    const int num_layers = weights.config.num_layers;
    if (!options.blank_layers.empty() &&
        options.blank_layers.size() != static_cast<std::size_t>(num_layers))
        throw InvalidArgument("blank layer flags must cover every layer");

    const AttentionPolicy policy = build_attention_policy(layout);
    const Matrix real_states = embed_conditions(conditions, layout, weights);
    const Matrix image_states = embed_conditions(image_only_condition_input(conditions), layout, weights);
    const Matrix blank_states = embed_conditions(blank_condition_input(layout), layout, weights);

    SampleResult result;
    result.latent = initial_latent(layout, weights.config, sampler.seed);
    result.latent.t = sampler.num_steps;

    // Condition rows never see noise tokens, so the blank stream's per-layer
    // states are the same for every step and latent.
    ConditionSubstitution substitution;
    const bool substitute = std::find(options.blank_layers.begin(), options.blank_layers.end(),
                                      true) != options.blank_layers.end();
    if (substitute) {
        ForwardOptions probe;
        probe.num_steps = sampler.num_steps;
        probe.condition_rows_out = &substitution.states;
        forward(result.latent, blank_states, layout, weights, policy, probe);
        substitution.layers = options.blank_layers;
    }

    std::vector<bool> capture(static_cast<std::size_t>(num_layers),
                              options.capture == TraceCapture::all);
    if (options.capture == TraceCapture::selected) {
        for (int l : options.capture_layers)
            if (l >= 0 && l < num_layers)
                capture[static_cast<std::size_t>(l)] = true;
    }

    const double dt = 1.0 / sampler.num_steps;
    std::vector<AttentionRecord> step_records;
    for (int step = 0; step < sampler.num_steps; ++step) {
        const bool blank = options.blank_at_step && options.blank_at_step(step);
        ForwardOptions base;
        base.step = step;
        base.num_steps = sampler.num_steps;
        base.substitution = substitute ? &substitution : nullptr;

        const Matrix v_uncond = forward(result.latent, blank_states, layout, weights, policy, base);
        const Matrix v_img = forward(result.latent, blank ? blank_states : image_states, layout,
                                     weights, policy, base);

        std::vector<bool> wanted(static_cast<std::size_t>(num_layers), false);
        if (options.controller)
            for (int l : options.controller->record_layers(step))
                if (l >= 0 && l < num_layers)
                    wanted[static_cast<std::size_t>(l)] = true;
        step_records.clear();
        const AttentionSink sink = [&](const AttentionRecord& record) {
            const auto l = static_cast<std::size_t>(record.layer);
            if (wanted[l])
                step_records.push_back(record);
            if (capture[l])
                result.trace.push_back(record);
        };
        ForwardOptions full = base;
        full.sink = &sink;
        full.intervention = options.controller ? options.controller->begin_step(step) : nullptr;
        const Matrix v_full = forward(result.latent, blank ? blank_states : real_states, layout,
                                      weights, policy, full);
        if (options.controller)
            options.controller->end_step(step, step_records);

        const Matrix velocity = guided_velocity(v_uncond, v_img, v_full, sampler.image_guidance,
                                                sampler.text_guidance);
        result.latent = flow_step(result.latent, velocity, dt);
    }
    return result;
}

}  // namespace saas
