// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace evkit::detail {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_text(const std::filesystem::path& path, const std::string& text);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);

// Little-endian encoding. The build only targets little-endian hosts
// (checked in io_util.cpp), so these are plain memcpy.
class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        const auto at = bytes_.size();
        bytes_.resize(at + sizeof(T));
        std::memcpy(bytes_.data() + at, &value, sizeof(T));
    }
    void put_raw(std::span<const std::uint8_t> raw) { bytes_.insert(bytes_.end(), raw.begin(), raw.end()); }
    void reserve(std::size_t n) { bytes_.reserve(n); }
    std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return offset_; }
    std::size_t remaining() const noexcept { return bytes_.size() - offset_; }

    // Throws ParseError naming `what` when fewer than sizeof(T) bytes remain.
    template <typename T>
    T get(const char* what) {
        require(sizeof(T), what);
        T value;
        std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
        offset_ += sizeof(T);
        return value;
    }

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        require(n, what);
        auto out = bytes_.subspan(offset_, n);
        offset_ += n;
        return out;
    }

    void require(std::size_t n, const char* what) const;

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t offset_ = 0;
};

// Raw little-endian float32 payloads.
std::vector<std::uint8_t> encode_f32(std::span<const float> values);
std::vector<float> decode_f32(std::span<const std::uint8_t> bytes, const std::string& what);

}  // namespace evkit::detail
