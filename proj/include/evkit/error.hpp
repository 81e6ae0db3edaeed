// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace evkit {

// Two families of failure. Input errors (bad files, bad config, empty data)
// map to CLI exit code 2; numeric errors (degenerate geometry, too little
// support, NaN) map to exit code 3.
enum class ErrorKind {
    kParse,
    kValidation,
    kConfig,
    kIo,
    kEmptyInput,
    kDegenerate,
    kInsufficientSupport,
    kNumeric,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    bool is_numeric() const noexcept {
        return kind_ == ErrorKind::kDegenerate ||
               kind_ == ErrorKind::kInsufficientSupport ||
               kind_ == ErrorKind::kNumeric;
    }

private:
    ErrorKind kind_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& message, std::uint64_t byte_offset)
        : Error(ErrorKind::kParse,
                message + " (at byte offset " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}

    std::uint64_t byte_offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

inline Error validation_error(const std::string& m) { return {ErrorKind::kValidation, m}; }
inline Error config_error(const std::string& m) { return {ErrorKind::kConfig, m}; }
inline Error io_error(const std::string& m) { return {ErrorKind::kIo, m}; }
inline Error empty_input_error(const std::string& m) { return {ErrorKind::kEmptyInput, m}; }
inline Error degenerate_error(const std::string& m) { return {ErrorKind::kDegenerate, m}; }
inline Error numeric_error(const std::string& m) { return {ErrorKind::kNumeric, m}; }

const char* to_string(ErrorKind kind) noexcept;

}  // namespace evkit
