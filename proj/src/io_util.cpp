// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "io_util.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "evkit/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "evkit file formats are little-endian; big-endian hosts need byte swapping");

namespace evkit {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::kParse: return "parse";
        case ErrorKind::kValidation: return "validation";
        case ErrorKind::kConfig: return "config";
        case ErrorKind::kIo: return "io";
        case ErrorKind::kEmptyInput: return "empty_input";
        case ErrorKind::kDegenerate: return "degenerate_geometry";
        case ErrorKind::kInsufficientSupport: return "insufficient_support";
        case ErrorKind::kNumeric: return "numeric";
    }
    return "unknown";
}

namespace detail {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_file_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open file for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw io_error("write failed: " + path.string());
}

void write_file_text(const std::filesystem::path& path, const std::string& text) {
    write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

nlohmann::json read_json(const std::filesystem::path& path) {
    const auto text = read_file_text(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("invalid JSON in " + path.string() + ": " + e.what(), e.byte);
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
    write_file_text(path, value.dump(2) + "\n");
}

void ByteReader::require(std::size_t n, const char* what) const {
    if (remaining() < n) {
        throw ParseError(std::string("truncated input while reading ") + what, offset_);
    }
}

std::vector<std::uint8_t> encode_f32(std::span<const float> values) {
    std::vector<std::uint8_t> out(values.size() * sizeof(float));
    if (!values.empty()) std::memcpy(out.data(), values.data(), out.size());
    return out;
}

std::vector<float> decode_f32(std::span<const std::uint8_t> bytes, const std::string& what) {
    if (bytes.size() % sizeof(float) != 0) {
        throw ParseError(what + ": payload size is not a multiple of 4", bytes.size());
    }
    std::vector<float> out(bytes.size() / sizeof(float));
    if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

}  // namespace detail
}  // namespace evkit
