// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace evkit {

// Dense row-major H x W raster.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int width, int height, T fill = T{})
        : width_(width),
          height_(height),
          data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }
    bool same_shape(const Grid& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }
    template <typename U>
    bool same_shape(const Grid<U>& other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
    const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    bool operator==(const Grid&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

// Binary masks hold 0 or 1 per pixel.
using BinaryMask = Grid<std::uint8_t>;

inline std::size_t count_set(const BinaryMask& mask) {
    std::size_t n = 0;
    for (auto b : mask.values()) n += (b != 0);
    return n;
}

}  // namespace evkit
