// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "evkit/grid.hpp"

namespace evkit {

// Dense per-pixel displacement with optional teacher visibility and
// confidence in [0, 1].
struct FlowField {
    Grid<float> u;
    Grid<float> v;
    std::optional<Grid<float>> visibility;
    std::optional<Grid<float>> confidence;

    FlowField() = default;
    FlowField(int width, int height) : u(width, height, 0.0f), v(width, height, 0.0f) {}

    int width() const noexcept { return u.width(); }
    int height() const noexcept { return u.height(); }

    // Finite u/v; visibility and confidence within [0, 1] and shaped like u.
    void validate() const;
};

// Middlebury .flo: float tag 202021.25, i32 width, i32 height, then
// interleaved float32 (u, v) row-major.
FlowField parse_flo(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_flo(const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);
void write_flo(const std::filesystem::path& path, const FlowField& flow);

// Single float32 plane stored raw with a JSON sidecar {"width", "height"}.
Grid<float> read_plane(const std::filesystem::path& raw_path, const std::filesystem::path& json_path);
void write_plane(const std::filesystem::path& raw_path, const std::filesystem::path& json_path,
                 const Grid<float>& plane);

// "frame.bin" -> "frame.json".
std::filesystem::path sidecar_path(const std::filesystem::path& raw_path);

}  // namespace evkit
