// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "io/config.hpp"

namespace fixture {

/// Small enough that a full sampling run takes a few milliseconds.
inline saas::io::RunConfig small_config() {
    saas::io::RunConfig c;
    c.backbone.num_layers = 4;
    c.backbone.num_heads = 2;
    c.backbone.model_dim = 16;
    c.backbone.vocab_size = 16;
    c.layout.grid_side = 4;
    c.layout.image_grid_side = 2;
    c.layout.text_len = 5;
    c.layout.spans = {{0, 2}, {2, 4}};
    c.sampler.num_steps = 10;
    return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        m_path = std::filesystem::temp_directory_path() /
                 ("saas-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                  std::to_string(counter++));
        std::filesystem::remove_all(m_path);
        std::filesystem::create_directories(m_path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(m_path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return m_path; }
    std::filesystem::path operator/(const std::string& name) const { return m_path / name; }

private:
    std::filesystem::path m_path;
};

}  // namespace fixture
