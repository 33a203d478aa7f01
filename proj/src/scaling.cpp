// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "scaling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace saas {

void SaasConfig::validate(int num_layers) const {
    if (!(tau >= 0.0 && tau <= 1.0))
        throw ConfigError("tau", "must lie in [0, 1]");
    if (!(alpha_cap > 0.0))
        throw ConfigError("alpha_cap", "must be positive");
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw ConfigError("kernel_size", "must be an odd integer >= 1");
    if (!(kernel_sigma > 0.0) || !std::isfinite(kernel_sigma))
        throw ConfigError("kernel_sigma", "must be positive and finite");
    for (double x : xi)
        if (!std::isfinite(x) || x <= 0.0)
            throw ConfigError("xi", "entries must be positive and finite");
    for (int l : vital_layers)
        if (l < 0 || l >= num_layers)
            throw ConfigError("vital_layers", "layer " + std::to_string(l) + " outside [0, " +
                                                  std::to_string(num_layers) + ")");
    if (window && *window < 0)
        throw ConfigError("window", "must be non-negative");
    if (force_alpha && !(*force_alpha > 0.0 && std::isfinite(*force_alpha)))
        throw ConfigError("force_alpha", "must be positive and finite");
}

double SaasConfig::xi_at(int step) const {
    if (step >= 0 && static_cast<std::size_t>(step) < xi.size())
        return xi[static_cast<std::size_t>(step)];
    return 1.0;
}

std::vector<int> SaasConfig::resolved_vital_layers(int num_layers) const {
    if (!vital_layers.empty()) {
        std::set<int> unique(vital_layers.begin(), vital_layers.end());
        return {unique.begin(), unique.end()};
    }
    std::vector<int> deep;
    for (int l = num_layers / 2; l < num_layers; ++l)
        deep.push_back(l);
    return deep;
}

int SaasConfig::resolved_window(int num_steps) const {
    if (window)
        return std::min(*window, num_steps);
    return static_cast<int>(std::lround(0.4 * num_steps));
}

std::vector<SpatialMap> average_vital_cross_attention(std::span<const AttentionRecord> records,
                                                      int step, const TokenLayout& layout,
                                                      std::span<const int> vital_layers) {
    const auto n_cond = static_cast<Eigen::Index>(layout.num_conditions());
    const auto n_noise = static_cast<Eigen::Index>(layout.num_noise());
    const auto noise_lo = static_cast<Eigen::Index>(layout.noise.lo);
    std::map<int, int> counts;
    for (int l : vital_layers)
        counts[l] = 0;

    Matrix sum = Matrix::Zero(n_noise, n_cond);
    int total = 0;
    for (const AttentionRecord& r : records) {
        if (r.step != step)
            continue;
        auto it = counts.find(r.layer);
        if (it == counts.end())
            continue;
        if (r.matrix.rows() != static_cast<Eigen::Index>(layout.total_len) ||
            r.matrix.cols() != static_cast<Eigen::Index>(layout.total_len))
            throw InvalidArgument("attention record does not match the layout");
        sum += r.matrix.block(noise_lo, 0, n_noise, n_cond);
        ++it->second;
        ++total;
    }
    for (const auto& [layer, count] : counts)
        if (count == 0)
            throw InvalidArgument("no attention records for vital layer " + std::to_string(layer) +
                                  " at step " + std::to_string(step));
    if (total == 0)
        throw InvalidArgument("no vital layers selected");
    sum /= static_cast<double>(total);

    std::vector<SpatialMap> maps;
    maps.reserve(static_cast<std::size_t>(n_cond));
    for (Eigen::Index j = 0; j < n_cond; ++j)
        maps.push_back({unflatten_spatial(sum.col(j), layout.grid_side), "e" + std::to_string(j)});
    return maps;
}

namespace {

std::vector<double> gaussian_kernel_1d(int kernel_size, double sigma) {
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw InvalidArgument("kernel size must be odd and >= 1");
    if (!(sigma > 0.0))
        throw InvalidArgument("kernel sigma must be positive");
    const int radius = kernel_size / 2;
    std::vector<double> k(static_cast<std::size_t>(kernel_size));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        total += w;
    }
    for (double& w : k)
        w /= total;
    return k;
}

Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
    const Eigen::Index period = 2 * n;
    Eigen::Index m = i % period;
    if (m < 0)
        m += period;
    return m < n ? m : period - 1 - m;
}

}  // namespace

Matrix gaussian_kernel(int kernel_size, double sigma) {
    const std::vector<double> k = gaussian_kernel_1d(kernel_size, sigma);
    const Eigen::Map<const Vector> v(k.data(), static_cast<Eigen::Index>(k.size()));
    return v * v.transpose();
}

SpatialMap gaussian_smooth(const SpatialMap& map, int kernel_size, double sigma) {
    const std::vector<double> k = gaussian_kernel_1d(kernel_size, sigma);
    const int radius = kernel_size / 2;
    const Matrix& in = map.grid;
    const Eigen::Index rows = in.rows();
    const Eigen::Index cols = in.cols();
    if (rows == 0 || cols == 0)
        throw InvalidArgument("cannot smooth an empty map");

    Matrix horizontal(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d)
                acc += k[static_cast<std::size_t>(d + radius)] * in(r, reflect_index(c + d, cols));
            horizontal(r, c) = acc;
        }
    }
    SpatialMap out{Matrix(rows, cols), map.subject};
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d)
                acc += k[static_cast<std::size_t>(d + radius)] *
                       horizontal(reflect_index(r + d, rows), c);
            out.grid(r, c) = acc;
        }
    }
    return out;
}

SpatialMap aggregate_instruction_map(std::span<const SpatialMap> smoothed, Span span) {
    if (span.empty())
        throw InvalidArgument("cannot aggregate an empty token span");
    if (span.hi > smoothed.size())
        throw InvalidArgument("token span exceeds the available maps");
    SpatialMap out{smoothed[span.lo].grid, "span"};
    for (std::size_t i = span.lo + 1; i < span.hi; ++i)
        out.grid += smoothed[i].grid;
    return out;
}

SpatialMap aggregate_image_map(std::span<const SpatialMap> smoothed, Span image_span) {
    if (image_span.empty())
        throw InvalidArgument("layout has no image condition to aggregate");
    SpatialMap out = aggregate_instruction_map(smoothed, image_span);
    out.subject = "I";
    return out;
}

NormalizedMap minmax_normalize(const Matrix& map) {
    const double lo = map.minCoeff();
    const double hi = map.maxCoeff();
    if (!(hi > lo))
        return {Matrix::Zero(map.rows(), map.cols()), true};
    return {(map.array() - lo) / (hi - lo), false};
}

InstructionMask extract_mask(const Matrix& normalized, double tau) {
    InstructionMask mask;
    mask.grid = normalized.array() >= tau;
    return mask;
}

OtsuResult otsu_threshold_histogram(std::span<const std::uint64_t> counts) {
    using i128 = __int128;
    using u128 = unsigned __int128;
    const std::size_t bins = counts.size();
    if (bins < 2)
        throw InvalidArgument("Otsu needs at least two histogram bins");

    // Means use bin centres in half-bin units (2b + 1), so every quantity is
    // an integer and candidate splits compare exactly:
    //   sigma_between ~ (m0 * n1 - m1 * n0)^2 / (n0 * n1)
    std::int64_t n_total = 0;
    std::int64_t m_total = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        n_total += static_cast<std::int64_t>(counts[b]);
        m_total += static_cast<std::int64_t>(counts[b]) * static_cast<std::int64_t>(2 * b + 1);
    }
    if (n_total > (std::int64_t{1} << 18) || bins > 4096)
        throw InvalidArgument("histogram too large for exact Otsu comparison");

    OtsuResult best;
    best.degenerate = true;
    u128 best_num = 0;
    u128 best_den = 1;
    std::int64_t n0 = 0;
    std::int64_t m0 = 0;
    for (std::size_t s = 1; s < bins; ++s) {
        n0 += static_cast<std::int64_t>(counts[s - 1]);
        m0 += static_cast<std::int64_t>(counts[s - 1]) * static_cast<std::int64_t>(2 * s - 1);
        const std::int64_t n1 = n_total - n0;
        const std::int64_t m1 = m_total - m0;
        if (n0 == 0 || n1 == 0)
            continue;
        const i128 a = static_cast<i128>(m0) * n1 - static_cast<i128>(m1) * n0;
        const u128 num = static_cast<u128>(a < 0 ? -a : a) * static_cast<u128>(a < 0 ? -a : a);
        const u128 den = static_cast<u128>(n0) * static_cast<u128>(n1);
        if (num * best_den > best_num * den) {
            best_num = num;
            best_den = den;
            best.boundary = static_cast<int>(s);
            best.degenerate = false;
        }
    }
    best.tau = best.degenerate ? 0.0 : static_cast<double>(best.boundary) / static_cast<double>(bins);
    if (best.degenerate)
        best.boundary = 0;
    return best;
}

OtsuResult otsu_threshold(const Matrix& normalized, int bins) {
    if (normalized.size() == 0)
        throw InvalidArgument("Otsu needs a nonempty map");
    if (bins < 2)
        throw InvalidArgument("Otsu needs at least two bins");
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(bins), 0);
    for (Eigen::Index i = 0; i < normalized.size(); ++i) {
        const double v = std::clamp(normalized.data()[i], 0.0, 1.0);
        const auto b = std::min(static_cast<int>(std::floor(v * bins)), bins - 1);
        ++counts[static_cast<std::size_t>(b)];
    }
    return otsu_threshold_histogram(counts);
}

ScalingFactor compute_scaling_factor(const Matrix& image_map, const Matrix& instruction_map,
                                     const BoolGrid& mask, double alpha_cap) {
    if (image_map.rows() != instruction_map.rows() || image_map.cols() != instruction_map.cols() ||
        mask.rows() != image_map.rows() || mask.cols() != image_map.cols())
        throw InvalidArgument("scaling factor inputs differ in shape");
    double image_mass = 0.0;
    double instruction_mass = 0.0;
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        if (mask.data()[i]) {
            image_mass += image_map.data()[i];
            instruction_mass += instruction_map.data()[i];
        }
    }
    ScalingFactor f;
    if (!(instruction_mass > 0.0) || !(image_mass > 0.0)) {
        f.skipped = true;
        return f;
    }
    f.alpha = image_mass / instruction_mass;
    if (f.alpha > alpha_cap) {
        f.alpha = alpha_cap;
        f.capped = true;
    }
    return f;
}

SaasPlan build_plan(std::span<const AttentionRecord> records, int step, const TokenLayout& layout,
                    const SaasConfig& config, int num_layers, PlanMaps* maps) {
    SaasPlan plan;
    plan.source_step = step;
    if (layout.num_instructions() == 0)
        return plan;

    const std::vector<int> vital = config.resolved_vital_layers(num_layers);
    std::vector<SpatialMap> per_token = average_vital_cross_attention(records, step, layout, vital);
    for (SpatialMap& m : per_token)
        m = gaussian_smooth(m, config.kernel_size, config.kernel_sigma);
    const SpatialMap image_map = aggregate_image_map(per_token, layout.image);

    const auto g = static_cast<Eigen::Index>(layout.grid_side);
    for (std::size_t i = 0; i < layout.num_instructions(); ++i) {
        SpatialMap instruction = aggregate_instruction_map(per_token, layout.sub_instructions[i]);
        instruction.subject = "T" + std::to_string(i);
        NormalizedMap normalized = minmax_normalize(instruction.grid);

        PlanEntry entry;
        entry.degenerate_map = normalized.degenerate;
        entry.tau = config.threshold_mode == ThresholdMode::otsu
                        ? otsu_threshold(normalized.grid).tau
                        : config.tau;
        entry.mask = extract_mask(normalized.grid, entry.tau);
        if (normalized.degenerate)
            entry.mask.grid = BoolGrid::Constant(g, g, false);
        if (config.force_full_mask)
            entry.mask.grid = BoolGrid::Constant(g, g, true);
        entry.mask.instruction = static_cast<int>(i);
        entry.mask.source_step = step;

        const ScalingFactor f =
            compute_scaling_factor(image_map.grid, instruction.grid, entry.mask.grid, config.alpha_cap);
        entry.alpha = f.alpha;
        entry.skipped = f.skipped;
        entry.capped = f.capped;
        if (config.force_alpha) {
            entry.alpha = *config.force_alpha;
            entry.skipped = false;
            entry.capped = false;
        }
        plan.entries.push_back(std::move(entry));

        if (maps) {
            maps->instruction_maps.push_back(std::move(instruction));
            maps->normalized.push_back(std::move(normalized));
        }
    }
    if (maps)
        maps->image_map = image_map;
    return plan;
}

Matrix apply_plan(const Matrix& attention, const TokenLayout& layout, const SaasPlan& plan,
                  double xi, OutsideMaskMode mode) {
    const auto total = static_cast<Eigen::Index>(layout.total_len);
    if (attention.rows() != total || attention.cols() != total)
        throw InvalidArgument("attention matrix does not match the layout");
    if (plan.entries.size() != layout.num_instructions())
        throw InvalidArgument("plan has " + std::to_string(plan.entries.size()) +
                              " entries for " + std::to_string(layout.num_instructions()) +
                              " sub-instructions");
    const auto g = static_cast<Eigen::Index>(layout.grid_side);
    for (const PlanEntry& e : plan.entries)
        if (e.mask.grid.rows() != g || e.mask.grid.cols() != g)
            throw InvalidArgument("plan mask does not match the noise grid");

    Matrix out = attention;
    for (std::size_t q = layout.noise.lo; q < layout.noise.hi; ++q) {
        const auto cell = static_cast<Eigen::Index>(q - layout.noise.lo);
        const auto row = static_cast<Eigen::Index>(q);
        for (std::size_t i = 0; i < plan.entries.size(); ++i) {
            const PlanEntry& entry = plan.entries[i];
            const Span span = layout.sub_instructions[i];
            const bool inside = entry.mask.grid(cell / g, cell % g);
            if (!inside && mode == OutsideMaskMode::keep)
                continue;
            const double factor = inside ? xi * entry.alpha : 0.0;
            for (std::size_t k = span.lo; k < span.hi; ++k)
                out(row, static_cast<Eigen::Index>(k)) *= factor;
        }
    }
    return out;
}

Matrix renormalize_attention(const Matrix& attention, const AttentionPolicy& policy) {
    if (attention.rows() != static_cast<Eigen::Index>(policy.size()) ||
        attention.cols() != static_cast<Eigen::Index>(policy.size()))
        throw InvalidArgument("attention matrix does not match the policy");
    Matrix out = attention;
    for (Eigen::Index q = 0; q < out.rows(); ++q) {
        double total = 0.0;
        for (Eigen::Index k = 0; k < out.cols(); ++k) {
            const double v = out(q, k);
            if (!std::isfinite(v))
                throw NumericalError(-1, "attention row " + std::to_string(q) +
                                             " has a non-finite entry");
            if (v < 0.0)
                throw InvalidArgument("attention entries must be non-negative");
            if (v != 0.0 && !policy.allow(q, k))
                throw InvalidArgument("attention has mass at a forbidden position");
            total += v;
        }
        if (!(total > 0.0))
            throw NumericalError(-1, "attention row " + std::to_string(q) + " has zero mass");
        out.row(q) /= total;
    }
    return out;
}

Matrix fixed_scale_baseline(const Matrix& attention, const TokenLayout& layout,
                            const AttentionPolicy& policy, double factor) {
    if (!(factor > 0.0) || !std::isfinite(factor))
        throw InvalidArgument("fixed scaling factor must be positive and finite");
    const auto total = static_cast<Eigen::Index>(layout.total_len);
    if (attention.rows() != total || attention.cols() != total)
        throw InvalidArgument("attention matrix does not match the layout");
    Matrix out = attention;
    for (std::size_t q = layout.noise.lo; q < layout.noise.hi; ++q)
        for (const Span& span : layout.sub_instructions)
            for (std::size_t k = span.lo; k < span.hi; ++k)
                out(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(k)) *= factor;
    return renormalize_attention(out, policy);
}

}  // namespace saas
