// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "io/files.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "scaling.hpp"

namespace saas::io {

namespace {

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(sizeof(T) == 8);
    std::uint64_t bits = 0;
    std::memcpy(&bits, &value, 8);
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::string_view in, std::size_t offset) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    T value;
    std::memcpy(&value, &bits, 8);
    return value;
}

std::string record_file_name(const AttentionRecord& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "s%03d_l%02d_h%02d.bin", r.step, r.layer, r.head);
    return buf;
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec)
        throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string canonical_json(const json& value) { return value.dump(2) + "\n"; }

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json layout_to_json(const LayoutSpec& layout) {
    json spans = json::array();
    for (const Span& s : layout.spans)
        spans.push_back({s.lo, s.hi});
    return {{"grid_side", layout.grid_side},
            {"image_grid_side", layout.image_grid_side},
            {"text_len", layout.text_len},
            {"spans", spans}};
}

LayoutSpec layout_from_json(const json& value) {
    try {
        LayoutSpec layout;
        layout.grid_side = value.at("grid_side").get<std::size_t>();
        layout.image_grid_side = value.at("image_grid_side").get<std::size_t>();
        layout.text_len = value.at("text_len").get<std::size_t>();
        layout.spans.clear();
        for (const json& s : value.at("spans"))
            layout.spans.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
        return layout;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed layout JSON: ") + e.what());
    }
}

std::string encode_matrix(const Matrix& m) {
    std::string out;
    out.reserve(16 + 8 * static_cast<std::size_t>(m.size()));
    put_le(out, static_cast<std::uint64_t>(m.rows()));
    put_le(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i)
        put_le(out, m.data()[i]);
    return out;
}

Matrix decode_matrix(std::string_view bytes) {
    if (bytes.size() < 16)
        throw IoError("matrix file shorter than its header");
    const auto rows = get_le<std::uint64_t>(bytes, 0);
    const auto cols = get_le<std::uint64_t>(bytes, 8);
    if (rows > (1u << 20) || cols > (1u << 20) || bytes.size() != 16 + 8 * rows * cols)
        throw IoError("matrix file size does not match its header");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = get_le<double>(bytes, 16 + 8 * static_cast<std::size_t>(i));
    return m;
}

void write_matrix(const fs::path& path, const Matrix& m) { write_file_atomic(path, encode_matrix(m)); }

Matrix read_matrix(const fs::path& path) { return decode_matrix(read_file(path)); }

void write_pgm(const fs::path& path, const PgmImage& image, PgmFormat format) {
    if (image.pixels.size() != image.width * image.height)
        throw InvalidArgument("PGM pixel count does not match its dimensions");
    if (image.maxval == 0 || image.maxval > 65535)
        throw InvalidArgument("PGM maxval must be in 1..65535");
    std::string out = (format == PgmFormat::plain ? "P2\n" : "P5\n") + std::to_string(image.width) +
                      " " + std::to_string(image.height) + "\n" + std::to_string(image.maxval) + "\n";
    if (format == PgmFormat::plain) {
        for (std::size_t r = 0; r < image.height; ++r) {
            for (std::size_t c = 0; c < image.width; ++c) {
                out += std::to_string(image.pixels[r * image.width + c]);
                out += c + 1 == image.width ? '\n' : ' ';
            }
        }
    } else {
        const bool wide = image.maxval > 255;
        for (std::uint32_t p : image.pixels) {
            if (wide)
                out.push_back(static_cast<char>((p >> 8) & 0xFF));  // big-endian per netpbm
            out.push_back(static_cast<char>(p & 0xFF));
        }
    }
    write_file_atomic(path, out);
}

PgmImage read_pgm(const fs::path& path) {
    const std::string bytes = read_file(path);
    std::size_t pos = 0;
    auto next_token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n')
                    ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])))
            ++pos;
        if (start == pos)
            throw IoError("truncated PGM file " + path.string());
        return bytes.substr(start, pos - start);
    };
    auto number = [&]() {
        const std::string t = next_token();
        try {
            return static_cast<std::uint32_t>(std::stoul(t));
        } catch (const std::exception&) {
            throw IoError("bad number '" + t + "' in PGM file " + path.string());
        }
    };

    const std::string magic = next_token();
    if (magic != "P2" && magic != "P5")
        throw IoError("not a PGM file: " + path.string());
    PgmImage image;
    image.width = number();
    image.height = number();
    image.maxval = number();
    if (image.maxval == 0 || image.maxval > 65535)
        throw IoError("PGM maxval out of range in " + path.string());
    const std::size_t n = image.width * image.height;
    image.pixels.resize(n);
    if (magic == "P2") {
        for (std::size_t i = 0; i < n; ++i)
            image.pixels[i] = number();
    } else {
        ++pos;  // single whitespace after maxval
        const std::size_t bpp = image.maxval > 255 ? 2 : 1;
        if (bytes.size() < pos + n * bpp)
            throw IoError("truncated PGM raster in " + path.string());
        for (std::size_t i = 0; i < n; ++i) {
            const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + i * bpp);
            image.pixels[i] = bpp == 2 ? (std::uint32_t{p[0]} << 8) | p[1] : p[0];
        }
    }
    for (std::uint32_t p : image.pixels)
        if (p > image.maxval)
            throw IoError("PGM pixel exceeds maxval in " + path.string());
    return image;
}

PgmImage map_to_pgm(const Matrix& map) {
    const NormalizedMap normalized = minmax_normalize(map);
    PgmImage image;
    image.width = static_cast<std::size_t>(map.cols());
    image.height = static_cast<std::size_t>(map.rows());
    image.maxval = 65535;
    image.pixels.resize(image.width * image.height);
    for (Eigen::Index i = 0; i < normalized.grid.size(); ++i)
        image.pixels[static_cast<std::size_t>(i)] =
            static_cast<std::uint32_t>(std::lround(normalized.grid.data()[i] * 65535.0));
    return image;
}

PgmImage mask_to_pgm(const BoolGrid& mask) {
    PgmImage image;
    image.width = static_cast<std::size_t>(mask.cols());
    image.height = static_cast<std::size_t>(mask.rows());
    image.maxval = 1;
    image.pixels.resize(image.width * image.height);
    for (Eigen::Index i = 0; i < mask.size(); ++i)
        image.pixels[static_cast<std::size_t>(i)] = mask.data()[i] ? 1 : 0;
    return image;
}

Matrix pgm_to_unit(const PgmImage& image) {
    Matrix m(static_cast<Eigen::Index>(image.height), static_cast<Eigen::Index>(image.width));
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = static_cast<double>(image.pixels[static_cast<std::size_t>(i)]) / image.maxval;
    return m;
}

void write_trace(const fs::path& dir, const std::vector<AttentionRecord>& records) {
    fs::create_directories(dir);
    json entries = json::array();
    for (const AttentionRecord& r : records) {
        const std::string file = record_file_name(r);
        write_matrix(dir / file, r.matrix);
        entries.push_back({{"step", r.step},
                           {"layer", r.layer},
                           {"head", r.head},
                           {"rows", r.matrix.rows()},
                           {"cols", r.matrix.cols()},
                           {"dtype", "f64"},
                           {"file", file}});
    }
    write_file_atomic(dir / "manifest.json", canonical_json({{"records", entries}}));
}

json read_trace_manifest(const fs::path& dir) {
    const fs::path manifest = dir / "manifest.json";
    if (!fs::exists(manifest))
        throw IoError("no attention trace at " + dir.string());
    try {
        return json::parse(read_file(manifest));
    } catch (const json::exception& e) {
        throw IoError("malformed trace manifest " + manifest.string() + ": " + e.what());
    }
}

std::vector<AttentionRecord> read_trace(const fs::path& dir, int step, const std::vector<int>& layers) {
    const json manifest = read_trace_manifest(dir);
    std::vector<AttentionRecord> records;
    for (const json& e : manifest.at("records")) {
        const int s = e.at("step").get<int>();
        const int l = e.at("layer").get<int>();
        if (s != step)
            continue;
        if (!layers.empty() && std::find(layers.begin(), layers.end(), l) == layers.end())
            continue;
        if (e.at("dtype").get<std::string>() != "f64")
            throw IoError("unsupported trace dtype");
        AttentionRecord r;
        r.step = s;
        r.layer = l;
        r.head = e.at("head").get<int>();
        r.matrix = read_matrix(dir / e.at("file").get<std::string>());
        if (r.matrix.rows() != e.at("rows").get<Eigen::Index>() ||
            r.matrix.cols() != e.at("cols").get<Eigen::Index>())
            throw IoError("trace record dims disagree with its manifest entry");
        records.push_back(std::move(r));
    }
    return records;
}

std::string csv_field(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos)
        return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

void write_curve_csv(const fs::path& path, const SimilarityReport& report) {
    std::string out = csv_field("parameter") + "," + csv_field("similarity") + "\n";
    char buf[64];
    for (const SweepPoint& p : report.curve) {
        std::snprintf(buf, sizeof buf, "%d,%.17g\n", p.parameter, p.similarity);
        out += buf;
    }
    write_file_atomic(path, out);
}

}  // namespace saas::io
