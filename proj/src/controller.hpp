// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "backbone.hpp"
#include "scaling.hpp"

namespace saas {

enum class ScalingMode { saas, fixed };

/// Drives attention scaling during sampling.
///
/// In `saas` mode the plan built from step t's vital-layer attention is
/// applied to every head of the vital layers at step t+1 (the next, less
/// noisy step), inside the scaling window only. The first window step has
/// no earlier plan and runs unscaled. In `fixed` mode every window step
/// multiplies instruction attention in the vital layers by a constant.
class ScalingController : public StepController {
public:
    ScalingController(const TokenLayout& layout, int num_layers, int num_steps, SaasConfig config,
                      ScalingMode mode = ScalingMode::saas, double fixed_factor = 1.0);

    const AttentionIntervention* begin_step(int step) override;
    std::vector<int> record_layers(int step) const override;
    void end_step(int step, std::span<const AttentionRecord> records) override;

    /// Plans built so far, in step order.
    const std::vector<SaasPlan>& plans() const noexcept { return m_plans; }
    int window() const noexcept { return m_window; }
    const std::vector<int>& vital_layers() const noexcept { return m_vital; }

private:
    TokenLayout m_layout;
    AttentionPolicy m_policy;
    int m_num_layers;
    SaasConfig m_config;
    ScalingMode m_mode;
    double m_fixed_factor;
    int m_window;
    std::vector<int> m_vital;
    std::vector<bool> m_is_vital;

    std::vector<SaasPlan> m_plans;
    std::optional<SaasPlan> m_pending;
    AttentionIntervention m_intervention;
};

}  // namespace saas
