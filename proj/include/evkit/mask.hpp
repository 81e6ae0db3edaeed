// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "evkit/grid.hpp"

namespace evkit {

// Binary PGM (P5, maxval 255). Set pixels are written as 255; on read any
// nonzero byte counts as set.
BinaryMask parse_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const BinaryMask& mask);
BinaryMask read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const BinaryMask& mask);

struct Offset {
    int dx = 0;
    int dy = 0;
};

// Centered k x k ellipse: (i/a)^2 + (j/a)^2 <= 1 with a = (k-1)/2. k = 3
// gives the plus-shaped cross, k = 7 the radius-3 disk. k must be odd.
std::vector<Offset> elliptical_kernel(int k);

// Pixels beyond the border never contribute: dilation treats them as unset
// and erosion ignores them. With a symmetric kernel this keeps
// closing(m) == ~opening(~m).
BinaryMask dilate(const BinaryMask& mask, std::span<const Offset> kernel);
BinaryMask erode(const BinaryMask& mask, std::span<const Offset> kernel);
BinaryMask opening(const BinaryMask& mask, std::span<const Offset> kernel);
BinaryMask closing(const BinaryMask& mask, std::span<const Offset> kernel);
BinaryMask complement(const BinaryMask& mask);

// 8-connected component labels, 0 for background, 1.. in raster order of
// each component's first pixel.
struct Components {
    Grid<std::int32_t> labels;
    std::vector<std::size_t> areas;  // areas[label - 1]
};
Components label_components(const BinaryMask& mask);

BinaryMask remove_small_components(const BinaryMask& mask, std::size_t min_area);

struct CleanupConfig {
    int open_kernel = 3;
    int close_kernel = 7;
    std::size_t min_component = 200;
};

// Opening, then closing, then dropping components below min_component.
BinaryMask mask_cleanup(const BinaryMask& mask, const CleanupConfig& cfg = {});

}  // namespace evkit
