// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "controller.hpp"

namespace saas {

ScalingController::ScalingController(const TokenLayout& layout, int num_layers, int num_steps,
                                     SaasConfig config, ScalingMode mode, double fixed_factor)
    : m_layout(layout),
      m_policy(build_attention_policy(layout)),
      m_num_layers(num_layers),
      m_config(std::move(config)),
      m_mode(mode),
      m_fixed_factor(fixed_factor) {
    m_config.validate(num_layers);
    if (mode == ScalingMode::fixed && !(fixed_factor > 0.0))
        throw ConfigError("factor", "must be positive");
    if (mode == ScalingMode::saas && layout.num_instructions() > 0 && layout.image.empty())
        throw ConfigError("image_grid_side", "adaptive scaling needs an image condition");
    m_window = m_config.resolved_window(num_steps);
    m_vital = m_config.resolved_vital_layers(num_layers);
    m_is_vital.assign(static_cast<std::size_t>(num_layers), false);
    for (int l : m_vital)
        m_is_vital[static_cast<std::size_t>(l)] = true;
}

const AttentionIntervention* ScalingController::begin_step(int step) {
    if (step >= m_window)
        return nullptr;
    if (m_mode == ScalingMode::fixed) {
        m_intervention = [this](int layer, int, Matrix& attention) {
            if (m_is_vital[static_cast<std::size_t>(layer)])
                attention = fixed_scale_baseline(attention, m_layout, m_policy, m_fixed_factor);
        };
        return &m_intervention;
    }
    if (!m_pending || m_pending->source_step != step - 1)
        return nullptr;
    const double xi = m_config.xi_at(m_pending->source_step);
    m_intervention = [this, xi](int layer, int, Matrix& attention) {
        if (!m_is_vital[static_cast<std::size_t>(layer)])
            return;
        attention = renormalize_attention(
            apply_plan(attention, m_layout, *m_pending, xi, m_config.outside_mask), m_policy);
    };
    return &m_intervention;
}

std::vector<int> ScalingController::record_layers(int step) const {
    // the plan from the last window step would never be applied
    if (m_mode != ScalingMode::saas || step + 1 >= m_window || m_layout.num_instructions() == 0)
        return {};
    return m_vital;
}

void ScalingController::end_step(int step, std::span<const AttentionRecord> records) {
    if (record_layers(step).empty())
        return;
    m_pending = build_plan(records, step, m_layout, m_config, m_num_layers);
    m_plans.push_back(*m_pending);
}

}  // namespace saas
