// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "evkit/mask.hpp"

#include <cctype>
#include <string>

#include "evkit/error.hpp"
#include "io_util.hpp"

namespace evkit {

namespace {

// Reads one unsigned header integer, skipping whitespace and # comments.
int pgm_header_int(std::span<const std::uint8_t> bytes, std::size_t& pos, const char* what) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(bytes[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    const auto start = pos;
    long long value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        value = value * 10 + (bytes[pos] - '0');
        if (value > (1 << 30)) throw ParseError(std::string("PGM ") + what + " too large", start);
        ++pos;
    }
    if (pos == start) throw ParseError(std::string("expected PGM ") + what, start);
    return static_cast<int>(value);
}

template <bool kDilate>
BinaryMask morph(const BinaryMask& mask, std::span<const Offset> kernel) {
    const int W = mask.width();
    const int H = mask.height();
    BinaryMask out(W, H, 0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            bool result = !kDilate;
            for (const auto& o : kernel) {
                const int sx = x + o.dx;
                const int sy = y + o.dy;
                if (!mask.contains(sx, sy)) continue;
                const bool set = mask(sx, sy) != 0;
                if (kDilate && set) {
                    result = true;
                    break;
                }
                if (!kDilate && !set) {
                    result = false;
                    break;
                }
            }
            out(x, y) = result ? 1 : 0;
        }
    }
    return out;
}

}  // namespace

BinaryMask parse_pgm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw ParseError("expected PGM magic P5", 0);
    std::size_t pos = 2;
    const int width = pgm_header_int(bytes, pos, "width");
    const int height = pgm_header_int(bytes, pos, "height");
    const int maxval = pgm_header_int(bytes, pos, "maxval");
    if (maxval != 255) throw ParseError("PGM maxval must be 255, got " + std::to_string(maxval), pos);
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw ParseError("expected whitespace after maxval", pos);
    ++pos;
    const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() - pos < n) throw ParseError("truncated PGM raster", bytes.size());
    if (bytes.size() - pos > n) throw ParseError("trailing bytes after PGM raster", pos + n);
    BinaryMask mask(width, height, 0);
    for (std::size_t i = 0; i < n; ++i) mask[i] = bytes[pos + i] != 0 ? 1 : 0;
    return mask;
}

std::vector<std::uint8_t> encode_pgm(const BinaryMask& mask) {
    const std::string header =
        "P5\n" + std::to_string(mask.width()) + " " + std::to_string(mask.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + mask.size());
    for (auto b : mask.values()) out.push_back(b ? 255 : 0);
    return out;
}

BinaryMask read_pgm(const std::filesystem::path& path) { return parse_pgm(detail::read_file_bytes(path)); }

void write_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
    detail::write_file_bytes(path, encode_pgm(mask));
}

std::vector<Offset> elliptical_kernel(int k) {
    if (k < 1 || k % 2 == 0) throw config_error("elliptical kernel size must be odd and >= 1");
    const int a = (k - 1) / 2;
    std::vector<Offset> out;
    for (int dy = -a; dy <= a; ++dy) {
        for (int dx = -a; dx <= a; ++dx) {
            if (dx * dx + dy * dy <= a * a) out.push_back({dx, dy});
        }
    }
    return out;
}

BinaryMask dilate(const BinaryMask& mask, std::span<const Offset> kernel) { return morph<true>(mask, kernel); }

BinaryMask erode(const BinaryMask& mask, std::span<const Offset> kernel) { return morph<false>(mask, kernel); }

BinaryMask opening(const BinaryMask& mask, std::span<const Offset> kernel) {
    return dilate(erode(mask, kernel), kernel);
}

BinaryMask closing(const BinaryMask& mask, std::span<const Offset> kernel) {
    return erode(dilate(mask, kernel), kernel);
}

BinaryMask complement(const BinaryMask& mask) {
    BinaryMask out = mask;
    for (auto& b : out.values()) b = b ? 0 : 1;
    return out;
}

Components label_components(const BinaryMask& mask) {
    const int W = mask.width();
    const int H = mask.height();
    Components out{Grid<std::int32_t>(W, H, 0), {}};
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (!mask(x, y) || out.labels(x, y) != 0) continue;
            const auto label = static_cast<std::int32_t>(out.areas.size() + 1);
            std::size_t area = 0;
            out.labels(x, y) = label;
            stack.push_back({x, y});
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                ++area;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = cx + dx;
                        const int ny = cy + dy;
                        if (mask.contains(nx, ny) && mask(nx, ny) && out.labels(nx, ny) == 0) {
                            out.labels(nx, ny) = label;
                            stack.push_back({nx, ny});
                        }
                    }
                }
            }
            out.areas.push_back(area);
        }
    }
    return out;
}

BinaryMask remove_small_components(const BinaryMask& mask, std::size_t min_area) {
    const auto comps = label_components(mask);
    BinaryMask out(mask.width(), mask.height(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto label = comps.labels[i];
        if (label > 0 && comps.areas[static_cast<std::size_t>(label - 1)] >= min_area) out[i] = 1;
    }
    return out;
}

BinaryMask mask_cleanup(const BinaryMask& mask, const CleanupConfig& cfg) {
    const auto open_k = elliptical_kernel(cfg.open_kernel);
    const auto close_k = elliptical_kernel(cfg.close_kernel);
    return remove_small_components(closing(opening(mask, open_k), close_k), cfg.min_component);
}

}  // namespace evkit
