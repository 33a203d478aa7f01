// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "io/commands.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace saas;
using namespace saas::io;

namespace {

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

std::string error_field(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<none>";
}

json without_timings(json manifest) {
    manifest.erase("timings");
    return manifest;
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::size_t at = 0;
    while (at < text.size()) {
        const std::size_t nl = text.find('\n', at);
        out.push_back(text.substr(at, nl - at));
        at = nl == std::string::npos ? text.size() : nl + 1;
    }
    return out;
}

}  // namespace

// ---- configuration -----------------------------------------------------

TEST_CASE("empty file gives the defaults") {
    fixture::TempDir dir("cfg");
    write_text(dir / "empty.ini", "");
    const RunConfig c = load_config(dir / "empty.ini", {});
    CHECK(c.saas.tau == 0.4);
    CHECK(c.sampler.image_guidance == 1.6);
    CHECK(c.sampler.text_guidance == 2.5);
    CHECK(c.sampler.num_steps == 50);
    CHECK(c.saas.resolved_window(c.sampler.num_steps) == 20);
    CHECK(c.backbone.num_layers == 8);
    CHECK(c.backbone.num_heads == 4);
    CHECK(c.layout.grid_side == 8);
    CHECK(c.mode == RunMode::saas);
    CHECK(config_to_kv(c).at("saas.window") == "20");
}

TEST_CASE("out-of-range tau names the field") {
    const std::string field = error_field([] { config_from_kv({{"saas.tau", "1.5"}}); });
    CHECK(field.find("tau") != std::string::npos);
}

TEST_CASE("bad values and unknown keys are rejected") {
    CHECK(error_field([] { config_from_kv({{"saas.bogus", "1"}}); }) == "saas.bogus");
    CHECK(error_field([] { config_from_kv({{"sampler.steps", "zero"}}); }) == "sampler.steps");
    CHECK(error_field([] { config_from_kv({{"sampler.steps", "0"}}); }) == "sampler.steps");
    CHECK(error_field([] { config_from_kv({{"layout.spans", "0-9"}}); }) == "layout.spans");
    CHECK(error_field([] { config_from_kv({{"run.mode", "turbo"}}); }) == "run.mode");
    CHECK(error_field([] { config_from_kv({{"backbone.dim", "30"}}); }) == "backbone.dim");
    CHECK_THROWS_AS(parse_config_text("[saas\ntau = 0.3\n"), ConfigError);
}

TEST_CASE("task selects the default threshold") {
    CHECK(config_from_kv({{"saas.task", "visual_conditional"}}).saas.tau == 0.2);
    CHECK(config_from_kv({{"saas.task", "visual_conditional"}, {"saas.tau", "0.3"}}).saas.tau == 0.3);
    CHECK(config_from_kv({{"saas.task", "editing"}}).saas.tau == 0.4);
}

TEST_CASE("flag beats file beats default") {
    fixture::TempDir dir("prec");
    // Three keys, each set at a different depth.
    write_text(dir / "run.ini", "# sweep point\n[saas]\ntau = 0.3\nalpha_cap = 7\n");
    const KeyValues flags{{"saas.tau", "0.25"}};
    const RunConfig c = load_config(dir / "run.ini", flags);
    CHECK(c.saas.tau == 0.25);        // flag over file
    CHECK(c.saas.alpha_cap == 7.0);   // file over default
    CHECK(c.saas.kernel_size == 3);   // default
    const RunConfig file_only = load_config(dir / "run.ini", {});
    CHECK(file_only.saas.tau == 0.3);
    const RunConfig flag_only = load_config({}, flags);
    CHECK(flag_only.saas.tau == 0.25);
    CHECK(flag_only.saas.alpha_cap == 20.0);
    CHECK_THROWS_AS(load_config(dir / "missing.ini", {}), Error);
}

TEST_CASE("resolved key-values round-trip") {
    RunConfig c = fixture::small_config();
    c.saas.xi = {1.0, 0.5};
    c.saas.vital_layers = {1, 3};
    c.saas.threshold_mode = ThresholdMode::otsu;
    c.saas.force_alpha = 1.0;
    c.mode = RunMode::fixed;
    c.factor = 5.0;
    const KeyValues kv = config_to_kv(c);
    CHECK(config_to_kv(config_from_kv(kv)) == kv);
    CHECK(kv.at("saas.tau") == "0.4");
    CHECK(kv.size() == known_config_keys().size());
}

// ---- file formats --------------------------------------------------------

TEST_CASE("matrix encoding") {
    Matrix m(2, 3);
    m << 1, 2, 3, 4, 5.5, -6;
    const std::string bytes = encode_matrix(m);
    REQUIRE(bytes.size() == 16 + 6 * 8);
    CHECK(bytes[0] == 2);
    CHECK(bytes[8] == 3);
    double first;
    std::memcpy(&first, bytes.data() + 16, 8);
    CHECK(first == 1.0);
    CHECK(decode_matrix(bytes) == m);
    CHECK_THROWS_AS(decode_matrix(bytes.substr(0, 20)), IoError);
}

TEST_CASE("map quantization") {
    Matrix normalized(2, 2);
    normalized << 0.0, 0.25, 0.5, 1.0;
    const PgmImage img = map_to_pgm(normalized);
    CHECK(img.maxval == 65535);
    CHECK(img.pixels == std::vector<std::uint32_t>{0, 16384, 32768, 65535});

    const PgmImage ones = mask_to_pgm(BoolGrid::Constant(3, 2, true));
    CHECK(ones.maxval == 1);
    CHECK(ones.width == 2);
    CHECK(ones.height == 3);
    CHECK(ones.pixels == std::vector<std::uint32_t>(6, 1));
}

TEST_CASE("PGM round-trips within one quantization step") {
    fixture::TempDir dir("pgm");
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix m(5, 7);
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = unit(rng);
        const Matrix scaled = minmax_normalize(m).grid;
        for (PgmFormat f : {PgmFormat::plain, PgmFormat::raw}) {
            write_pgm(dir / "m.pgm", map_to_pgm(m), f);
            const PgmImage back = read_pgm(dir / "m.pgm");
            CHECK(back.width == 7);
            CHECK(back.height == 5);
            CHECK(oracle::max_abs_diff(pgm_to_unit(back), scaled) <= 1.0 / 65535.0);
        }
    }
    BoolGrid mask(2, 3);
    mask << true, false, true, false, false, true;
    write_pgm(dir / "k.pgm", mask_to_pgm(mask), PgmFormat::plain);
    CHECK(read_file(dir / "k.pgm").rfind("P2", 0) == 0);
    CHECK(read_pgm(dir / "k.pgm").pixels == std::vector<std::uint32_t>{1, 0, 1, 0, 0, 1});
    write_text(dir / "bad.pgm", "P6\n1 1\n255\nx");
    CHECK_THROWS_AS(read_pgm(dir / "bad.pgm"), IoError);
}

TEST_CASE("trace round-trip") {
    fixture::TempDir dir("trace");
    std::mt19937_64 rng(4);
    const TokenLayout l = build_layout(2, 1, 2, {{0, 2}});
    const AttentionPolicy p = build_attention_policy(l);
    std::vector<AttentionRecord> records;
    for (int step = 0; step < 2; ++step)
        for (int layer = 0; layer < 3; ++layer)
            for (int head = 0; head < 2; ++head)
                records.push_back({step, layer, head, oracle::random_attention(p.allow, rng)});
    write_trace(dir.path(), records);
    const json manifest = read_trace_manifest(dir.path());
    REQUIRE(manifest["records"].size() == 12);
    const json& first = manifest["records"][0];
    CHECK(first["dtype"] == "f64");
    CHECK(first["rows"] == 7);
    CHECK(first["file"] == "s000_l00_h00.bin");

    const std::vector<AttentionRecord> back = read_trace(dir.path(), 1, {2});
    REQUIRE(back.size() == 2);
    CHECK(back[0].matrix == records[10].matrix);
    CHECK(back[1].matrix == records[11].matrix);
    CHECK(read_trace(dir.path(), 0).size() == 6);
    CHECK_THROWS_AS(read_trace_manifest(dir / "nowhere"), IoError);
}

TEST_CASE("CSV and canonical JSON") {
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(canonical_json(json{{"b", 1}, {"a", 2}}) == "{\n  \"a\": 2,\n  \"b\": 1\n}\n");
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

// ---- commands ------------------------------------------------------------

TEST_CASE("run writes replayable, deterministic artifacts") {
    fixture::TempDir dir("run");
    const RunConfig c = fixture::small_config();
    const RunOutputs a = cmd_run(c, dir / "a", true);
    const RunOutputs b = cmd_run(c, dir / "b", false);
    CHECK(read_file(dir / "a/latent.bin") == read_file(dir / "b/latent.bin"));
    CHECK(fs::exists(dir / "a/preview.pgm"));
    CHECK(fs::exists(dir / "a/trace/manifest.json"));
    CHECK_FALSE(fs::exists(dir / "b/trace"));

    json ma = json::parse(read_file(a.manifest));
    json mb = json::parse(read_file(b.manifest));
    CHECK(ma["software_version"] == "saas-attn 1.0.0");
    CHECK(ma["run_id"] == run_id(c));
    CHECK(ma["plans"].size() == 3);
    CHECK(ma.contains("timings"));
    CHECK(ma["seeds"]["sampler"] == 7);
    mb["outputs"].erase("trace");
    ma["outputs"].erase("trace");
    CHECK(without_timings(ma) == without_timings(mb));

    const RunConfig replay = config_from_manifest(a.manifest);
    CHECK(config_to_kv(replay) == config_to_kv(c));
    cmd_run(replay, dir / "c", false);
    CHECK(read_file(dir / "c/latent.bin") == read_file(dir / "a/latent.bin"));
}

TEST_CASE("neutral adaptive run equals the baseline file") {
    fixture::TempDir dir("neutral");
    RunConfig base = fixture::small_config();
    base.mode = RunMode::baseline;
    RunConfig neutral = fixture::small_config();
    neutral.saas.force_alpha = 1.0;
    neutral.saas.force_full_mask = true;
    cmd_run(base, dir / "base", false);
    cmd_run(neutral, dir / "neutral", false);
    const Matrix x = read_matrix(dir / "base/latent.bin");
    const Matrix y = read_matrix(dir / "neutral/latent.bin");
    CHECK(oracle::max_abs_diff(x, y) <= 1e-12);
}

TEST_CASE("perturb writes curves with the unperturbed endpoints") {
    fixture::TempDir dir("perturb");
    const RunConfig c = fixture::small_config();
    PerturbRequest steps;
    const std::vector<fs::path> s = cmd_perturb(c, steps, dir / "s");
    REQUIRE(s.size() == 1);
    const std::vector<std::string> rows = lines(read_file(s[0]));
    REQUIRE(rows.size() == 4);  // header + steps 0, 5, 10
    CHECK(rows[0] == "parameter,similarity");
    CHECK(rows[3].rfind("10,1", 0) == 0);
    const json m = json::parse(read_file(dir / "s/perturb_manifest.json"));
    CHECK(m["baseline_run_id"].is_string());
    CHECK(m["curves"].size() == 1);

    PerturbRequest layers;
    layers.kind = PerturbKind::layers;
    const std::vector<fs::path> l = cmd_perturb(c, layers, dir / "l");
    REQUIRE(l.size() == 2);
    for (const fs::path& p : l) {
        const std::vector<std::string> r = lines(read_file(p));
        CHECK(r.size() == 6);  // header + 0..4 layers
        CHECK(r[1].rfind("0,1", 0) == 0);
    }
    PerturbRequest bad;
    bad.to = 99;
    CHECK_THROWS_AS(cmd_perturb(c, bad, dir / "bad"), ConfigError);
}

TEST_CASE("dump-attn writes maps, masks and sidecars") {
    fixture::TempDir dir("dump");
    const RunConfig c = fixture::small_config();
    cmd_run(c, dir / "run", true);
    DumpRequest req;
    req.step = 1;
    const std::vector<fs::path> files = cmd_dump_attn(dir / "run", req, dir / "maps");
    CHECK(files.size() == 5);  // I + 2 x (map, mask)
    const PgmImage mask = read_pgm(dir / "maps/step1_T0_mask.pgm");
    CHECK(mask.maxval == 1);
    CHECK(read_pgm(dir / "maps/step1_I_map.pgm").maxval == 65535);
    const json side = json::parse(read_file(dir / "maps/step1_T0_mask.json"));
    CHECK(side["step"] == 1);
    CHECK(side["tau"] == 0.4);
    CHECK(side["alpha"].is_number());
    CHECK(side["subject"] == "T0");
    CHECK(side["layer_set"] == json::array({2, 3}));

    req.tokens = true;
    CHECK(cmd_dump_attn(dir / "run", req, dir / "all").size() == 5 + 4 + 5);
    cmd_run(c, dir / "bare", false);
    CHECK_THROWS_AS(cmd_dump_attn(dir / "bare", req, dir / "x"), IoError);
}

TEST_CASE("bench report format") {
    RunConfig c = fixture::small_config();
    const BenchReport r = cmd_bench(c, 3);
    CHECK(r.repeats == 3);
    CHECK(r.baseline_runs_s.size() == 3);
    CHECK(r.saas_median_s > 0.0);
    const std::string text = r.text();
    CHECK(text.find("29.1 s -> 29.4 s") != std::string::npos);
    CHECK(text.find("1.03%") != std::string::npos);
    CHECK(text.find("baseline") != std::string::npos);
    CHECK(r.to_json()["reference"]["incremental_percent"] == 1.03);
    CHECK_THROWS_AS(cmd_bench(c, 2), ConfigError);
}
