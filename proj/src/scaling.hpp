// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Self-adaptive attention scaling: instruction masks and scaling factors are
// extracted from the vital-layer cross-attention at step t and applied to the
// instruction keys at step t-1.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "backbone.hpp"
#include "common.hpp"
#include "layout.hpp"

namespace saas {

enum class ThresholdMode { fixed, otsu };
enum class OutsideMaskMode { zero, keep };

struct SaasConfig {
    double tau = 0.4;
    ThresholdMode threshold_mode = ThresholdMode::fixed;
    /// Per-step coefficient indexed by the plan's source step; missing
    /// entries (and the empty default) mean 1.
    std::vector<double> xi;
    /// Empty selects the deepest half of the layers.
    std::vector<int> vital_layers;
    /// Number of leading steps with scaling; unset selects 40% of the steps.
    std::optional<int> window;
    double alpha_cap = 20.0;
    int kernel_size = 3;
    double kernel_sigma = 1.0;
    OutsideMaskMode outside_mask = OutsideMaskMode::zero;

    /// Diagnostics: pin every factor, or use all-ones masks.
    std::optional<double> force_alpha;
    bool force_full_mask = false;

    void validate(int num_layers) const;
    double xi_at(int step) const;
    std::vector<int> resolved_vital_layers(int num_layers) const;
    int resolved_window(int num_steps) const;
};

inline constexpr double kEditingTau = 0.4;
inline constexpr double kVisualConditionalTau = 0.2;

/// Mean over the vital (layer, head) records of `step` of each condition
/// key's noise-query column, reshaped to the noise grid. Index = condition
/// token index.
std::vector<SpatialMap> average_vital_cross_attention(std::span<const AttentionRecord> records,
                                                      int step, const TokenLayout& layout,
                                                      std::span<const int> vital_layers);

/// Normalized 2-D Gaussian kernel (outer product of the 1-D kernel).
Matrix gaussian_kernel(int kernel_size, double sigma);

/// Separable convolution with reflect padding (edge sample repeated).
SpatialMap gaussian_smooth(const SpatialMap& map, int kernel_size, double sigma);

/// Sum of already smoothed per-token maps over `span` (absolute indices).
SpatialMap aggregate_instruction_map(std::span<const SpatialMap> smoothed, Span span);
SpatialMap aggregate_image_map(std::span<const SpatialMap> smoothed, Span image_span);

struct NormalizedMap {
    Matrix grid;
    bool degenerate = false;
};

/// A constant map yields all zeros with `degenerate` set.
NormalizedMap minmax_normalize(const Matrix& map);

struct InstructionMask {
    BoolGrid grid;
    int instruction = 0;
    int source_step = 0;
};

InstructionMask extract_mask(const Matrix& normalized, double tau);

struct OtsuResult {
    double tau = 0.0;
    int boundary = 0;  // first bin of the upper class
    bool degenerate = false;
};

inline constexpr int kOtsuBins = 256;

/// Exact (integer) Otsu split of a histogram. Candidate boundaries are
/// 1..bins-1; ties go to the smallest boundary.
OtsuResult otsu_threshold_histogram(std::span<const std::uint64_t> counts);

/// Histogram of a [0,1] map (bin = floor(v * bins), clamped) followed by
/// the histogram split; tau = boundary / bins.
OtsuResult otsu_threshold(const Matrix& normalized, int bins = kOtsuBins);

struct ScalingFactor {
    double alpha = 1.0;
    bool skipped = false;
    bool capped = false;
};

ScalingFactor compute_scaling_factor(const Matrix& image_map, const Matrix& instruction_map,
                                     const BoolGrid& mask, double alpha_cap);

struct PlanEntry {
    InstructionMask mask;
    double alpha = 1.0;
    double tau = 0.0;
    bool degenerate_map = false;
    bool skipped = false;
    bool capped = false;
};

struct SaasPlan {
    int source_step = 0;
    std::vector<PlanEntry> entries;
};

/// Intermediate maps of a plan build, kept for dumps.
struct PlanMaps {
    std::vector<SpatialMap> instruction_maps;
    SpatialMap image_map;
    std::vector<NormalizedMap> normalized;
};

SaasPlan build_plan(std::span<const AttentionRecord> records, int step, const TokenLayout& layout,
                    const SaasConfig& config, int num_layers, PlanMaps* maps = nullptr);

/// Scales instruction keys of noise queries per the plan. The result is not
/// renormalized.
Matrix apply_plan(const Matrix& attention, const TokenLayout& layout, const SaasPlan& plan,
                  double xi, OutsideMaskMode mode);

Matrix renormalize_attention(const Matrix& attention, const AttentionPolicy& policy);

/// Multiplies every noise-query x instruction-key entry by `factor`, then
/// renormalizes.
Matrix fixed_scale_baseline(const Matrix& attention, const TokenLayout& layout,
                            const AttentionPolicy& policy, double factor);

}  // namespace saas
