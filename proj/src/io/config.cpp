// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "io/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace saas::io {

namespace {

const std::vector<std::string> kKeys = {
    "backbone.layers",     "backbone.heads",         "backbone.dim",
    "backbone.vocab",      "backbone.ffn_mult",      "backbone.seed",
    "layout.grid_side",    "layout.image_grid_side", "layout.text_len",
    "layout.spans",        "sampler.steps",          "sampler.image_guidance",
    "sampler.text_guidance", "sampler.seed",         "saas.task",
    "saas.tau",            "saas.threshold",         "saas.xi",
    "saas.vital_layers",   "saas.window",            "saas.alpha_cap",
    "saas.kernel_size",    "saas.kernel_sigma",      "saas.outside_mask",
    "saas.force_alpha",    "saas.mask",              "conditions.seed",
    "run.mode",            "run.factor",
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty())
            parts.push_back(item);
    }
    return parts;
}

std::string format_double(double v) {
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

class Reader {
public:
    explicit Reader(const KeyValues& values) : m_values(values) {
        const std::set<std::string> known(kKeys.begin(), kKeys.end());
        for (const auto& [key, value] : values)
            if (!known.count(key))
                throw ConfigError(key, "unknown configuration key");
    }

    bool has(const std::string& key) const { return m_values.count(key) > 0; }
    const std::string& raw(const std::string& key) const { return m_values.at(key); }

    template <typename Int>
    void integer(const std::string& key, Int& out, Int min_value) const {
        if (!has(key))
            return;
        const std::string& s = raw(key);
        Int v{};
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            throw ConfigError(key, "expected an integer, got '" + s + "'");
        if (v < min_value)
            throw ConfigError(key, "must be at least " + std::to_string(min_value));
        out = v;
    }

    static double parse_real(const std::string& key, const std::string& s) {
        if (s == "inf")
            return std::numeric_limits<double>::infinity();
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            throw ConfigError(key, "expected a number, got '" + s + "'");
        return v;
    }

    void real(const std::string& key, double& out) const {
        if (has(key))
            out = parse_real(key, raw(key));
    }

private:
    const KeyValues& m_values;
};

}  // namespace

const char* to_string(RunMode mode) {
    switch (mode) {
    case RunMode::baseline: return "baseline";
    case RunMode::saas: return "saas";
    case RunMode::fixed: return "fixed";
    }
    return "?";
}

TokenLayout LayoutSpec::build() const {
    return build_layout(grid_side, image_grid_side ? std::optional<std::size_t>(image_grid_side)
                                                   : std::nullopt,
                        text_len, spans);
}

std::vector<std::string> known_config_keys() { return kKeys; }

KeyValues parse_config_text(const std::string& text) {
    // '#' comments are accepted alongside the parser's ';'
    std::istringstream lines(text);
    std::ostringstream cleaned;
    std::string line;
    while (std::getline(lines, line)) {
        const std::string t = trim(line);
        cleaned << (t.rfind('#', 0) == 0 ? std::string() : line) << '\n';
    }
    boost::property_tree::ptree tree;
    std::istringstream in(cleaned.str());
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config", "parse failure at line " + std::to_string(e.line()) + ": " +
                                        e.message());
    }
    KeyValues values;
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            values[section] = trim(body.data());
            continue;
        }
        for (const auto& [key, value] : body)
            values[section + "." + key] = trim(value.data());
    }
    return values;
}

KeyValues read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config", "cannot read " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_text(text.str());
}

RunConfig config_from_kv(const KeyValues& values) {
    const Reader r(values);
    RunConfig c;

    r.integer("backbone.layers", c.backbone.num_layers, 2);
    r.integer("backbone.heads", c.backbone.num_heads, 1);
    r.integer("backbone.dim", c.backbone.model_dim, 1);
    r.integer("backbone.vocab", c.backbone.vocab_size, 2);
    r.integer("backbone.ffn_mult", c.backbone.ffn_mult, 1);
    r.integer<std::uint64_t>("backbone.seed", c.backbone.seed, 0);
    if (c.backbone.model_dim % c.backbone.num_heads != 0)
        throw ConfigError("backbone.dim", "must be divisible by backbone.heads");

    r.integer<std::size_t>("layout.grid_side", c.layout.grid_side, 1);
    r.integer<std::size_t>("layout.image_grid_side", c.layout.image_grid_side, 0);
    r.integer<std::size_t>("layout.text_len", c.layout.text_len, 0);
    if (r.has("layout.spans")) {
        c.layout.spans.clear();
        for (const std::string& part : split(r.raw("layout.spans"), ',')) {
            const auto dash = part.find('-');
            if (dash == std::string::npos)
                throw ConfigError("layout.spans", "expected lo-hi pairs, got '" + part + "'");
            auto bound = [](const std::string& v) {
                std::size_t out = 0;
                auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
                if (ec != std::errc() || p != v.data() + v.size())
                    throw ConfigError("layout.spans", "bad span bound '" + v + "'");
                return out;
            };
            const Span s{bound(trim(part.substr(0, dash))), bound(trim(part.substr(dash + 1)))};
            c.layout.spans.push_back(s);
        }
    }
    try {
        c.layout.build();
    } catch (const InvalidArgument& e) {
        throw ConfigError("layout.spans", e.what());
    }

    r.integer("sampler.steps", c.sampler.num_steps, 1);
    r.real("sampler.image_guidance", c.sampler.image_guidance);
    r.real("sampler.text_guidance", c.sampler.text_guidance);
    r.integer<std::uint64_t>("sampler.seed", c.sampler.seed, 0);
    if (!std::isfinite(c.sampler.image_guidance))
        throw ConfigError("sampler.image_guidance", "must be finite");
    if (!std::isfinite(c.sampler.text_guidance))
        throw ConfigError("sampler.text_guidance", "must be finite");

    if (r.has("saas.task")) {
        c.task = r.raw("saas.task");
        if (c.task != "editing" && c.task != "visual_conditional")
            throw ConfigError("saas.task", "expected editing or visual_conditional");
    }
    c.saas.tau = c.task == "editing" ? kEditingTau : kVisualConditionalTau;
    r.real("saas.tau", c.saas.tau);
    if (r.has("saas.threshold")) {
        const std::string& v = r.raw("saas.threshold");
        if (v == "fixed")
            c.saas.threshold_mode = ThresholdMode::fixed;
        else if (v == "otsu")
            c.saas.threshold_mode = ThresholdMode::otsu;
        else
            throw ConfigError("saas.threshold", "expected fixed or otsu");
    }
    if (r.has("saas.xi")) {
        c.saas.xi.clear();
        for (const std::string& part : split(r.raw("saas.xi"), ','))
            c.saas.xi.push_back(Reader::parse_real("saas.xi", part));
    }
    if (r.has("saas.vital_layers") && r.raw("saas.vital_layers") != "deep") {
        c.saas.vital_layers.clear();
        for (const std::string& part : split(r.raw("saas.vital_layers"), ',')) {
            int l = 0;
            auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), l);
            if (ec != std::errc() || p != part.data() + part.size())
                throw ConfigError("saas.vital_layers", "bad layer index '" + part + "'");
            c.saas.vital_layers.push_back(l);
        }
        if (c.saas.vital_layers.empty())
            throw ConfigError("saas.vital_layers", "must name at least one layer");
    }
    if (r.has("saas.window")) {
        int w = 0;
        r.integer("saas.window", w, 0);
        c.saas.window = w;
    }
    r.real("saas.alpha_cap", c.saas.alpha_cap);
    r.integer("saas.kernel_size", c.saas.kernel_size, 1);
    r.real("saas.kernel_sigma", c.saas.kernel_sigma);
    if (r.has("saas.outside_mask")) {
        const std::string& v = r.raw("saas.outside_mask");
        if (v == "zero")
            c.saas.outside_mask = OutsideMaskMode::zero;
        else if (v == "keep")
            c.saas.outside_mask = OutsideMaskMode::keep;
        else
            throw ConfigError("saas.outside_mask", "expected zero or keep");
    }
    if (r.has("saas.force_alpha") && r.raw("saas.force_alpha") != "none") {
        double a = 0.0;
        r.real("saas.force_alpha", a);
        c.saas.force_alpha = a;
    }
    if (r.has("saas.mask")) {
        const std::string& v = r.raw("saas.mask");
        if (v == "all")
            c.saas.force_full_mask = true;
        else if (v != "adaptive")
            throw ConfigError("saas.mask", "expected adaptive or all");
    }
    try {
        c.saas.validate(c.backbone.num_layers);
    } catch (const ConfigError& e) {
        throw ConfigError("saas." + e.field(), e.what());
    }

    r.integer<std::uint64_t>("conditions.seed", c.condition_seed, 0);

    if (r.has("run.mode")) {
        const std::string& v = r.raw("run.mode");
        if (v == "baseline")
            c.mode = RunMode::baseline;
        else if (v == "saas")
            c.mode = RunMode::saas;
        else if (v == "fixed")
            c.mode = RunMode::fixed;
        else
            throw ConfigError("run.mode", "expected baseline, saas or fixed");
    }
    r.real("run.factor", c.factor);
    if (!(c.factor > 0.0) || !std::isfinite(c.factor))
        throw ConfigError("run.factor", "must be positive and finite");
    if (c.mode == RunMode::saas && c.layout.image_grid_side == 0 && !c.layout.spans.empty())
        throw ConfigError("layout.image_grid_side", "saas mode needs an image condition");
    return c;
}

KeyValues config_to_kv(const RunConfig& c) {
    KeyValues kv;
    kv["backbone.layers"] = std::to_string(c.backbone.num_layers);
    kv["backbone.heads"] = std::to_string(c.backbone.num_heads);
    kv["backbone.dim"] = std::to_string(c.backbone.model_dim);
    kv["backbone.vocab"] = std::to_string(c.backbone.vocab_size);
    kv["backbone.ffn_mult"] = std::to_string(c.backbone.ffn_mult);
    kv["backbone.seed"] = std::to_string(c.backbone.seed);

    kv["layout.grid_side"] = std::to_string(c.layout.grid_side);
    kv["layout.image_grid_side"] = std::to_string(c.layout.image_grid_side);
    kv["layout.text_len"] = std::to_string(c.layout.text_len);
    std::string spans;
    for (const Span& s : c.layout.spans)
        spans += (spans.empty() ? "" : ",") + std::to_string(s.lo) + "-" + std::to_string(s.hi);
    kv["layout.spans"] = spans;

    kv["sampler.steps"] = std::to_string(c.sampler.num_steps);
    kv["sampler.image_guidance"] = format_double(c.sampler.image_guidance);
    kv["sampler.text_guidance"] = format_double(c.sampler.text_guidance);
    kv["sampler.seed"] = std::to_string(c.sampler.seed);

    kv["saas.task"] = c.task;
    kv["saas.tau"] = format_double(c.saas.tau);
    kv["saas.threshold"] = c.saas.threshold_mode == ThresholdMode::otsu ? "otsu" : "fixed";
    std::string xi;
    for (double x : c.saas.xi)
        xi += (xi.empty() ? "" : ",") + format_double(x);
    kv["saas.xi"] = xi;
    std::string vital;
    for (int l : c.saas.vital_layers)
        vital += (vital.empty() ? "" : ",") + std::to_string(l);
    kv["saas.vital_layers"] = vital.empty() ? "deep" : vital;
    if (c.saas.window)
        kv["saas.window"] = std::to_string(*c.saas.window);
    else
        kv["saas.window"] = std::to_string(c.saas.resolved_window(c.sampler.num_steps));
    kv["saas.alpha_cap"] = format_double(c.saas.alpha_cap);
    kv["saas.kernel_size"] = std::to_string(c.saas.kernel_size);
    kv["saas.kernel_sigma"] = format_double(c.saas.kernel_sigma);
    kv["saas.outside_mask"] = c.saas.outside_mask == OutsideMaskMode::keep ? "keep" : "zero";
    kv["saas.force_alpha"] = c.saas.force_alpha ? format_double(*c.saas.force_alpha) : "none";
    kv["saas.mask"] = c.saas.force_full_mask ? "all" : "adaptive";

    kv["conditions.seed"] = std::to_string(c.condition_seed);
    kv["run.mode"] = to_string(c.mode);
    kv["run.factor"] = format_double(c.factor);
    return kv;
}

RunConfig load_config(const std::filesystem::path& path, const KeyValues& overrides) {
    KeyValues merged;
    if (!path.empty())
        merged = read_config_file(path);
    for (const auto& [key, value] : overrides)
        merged[key] = value;
    return config_from_kv(merged);
}

}  // namespace saas::io
