// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "evkit/flow.hpp"

#include <cmath>

#include "evkit/error.hpp"
#include "io_util.hpp"

namespace evkit {

namespace {

constexpr float kFloTag = 202021.25f;

void check_unit_plane(const Grid<float>& plane, const Grid<float>& like, const char* name) {
    if (!plane.same_shape(like)) {
        throw validation_error(std::string(name) + " map shape does not match the flow field");
    }
    for (std::size_t i = 0; i < plane.size(); ++i) {
        const float value = plane[i];
        if (!(value >= 0.0f && value <= 1.0f)) {
            throw validation_error(std::string(name) + " value outside [0,1] at pixel index " + std::to_string(i));
        }
    }
}

}  // namespace

void FlowField::validate() const {
    if (!u.same_shape(v)) throw validation_error("flow u and v planes differ in shape");
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (!std::isfinite(u[i]) || !std::isfinite(v[i])) {
            throw validation_error("non-finite flow at pixel index " + std::to_string(i));
        }
    }
    if (visibility) check_unit_plane(*visibility, u, "visibility");
    if (confidence) check_unit_plane(*confidence, u, "confidence");
}

FlowField parse_flo(std::span<const std::uint8_t> bytes) {
    detail::ByteReader in(bytes);
    if (in.get<float>("tag") != kFloTag) throw ParseError("bad .flo tag; expected 202021.25", 0);
    const auto width = in.get<std::int32_t>("width");
    const auto height = in.get<std::int32_t>("height");
    if (width < 0 || height < 0) throw ParseError("negative .flo dimensions", 4);
    const auto n = static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height);
    if (n > in.remaining() / 8) {
        throw ParseError("truncated .flo payload for " + std::to_string(width) + "x" + std::to_string(height),
                         in.offset() + in.remaining() / 8 * 8);
    }
    FlowField flow(width, height);
    for (std::size_t i = 0; i < n; ++i) {
        flow.u[i] = in.get<float>("u");
        flow.v[i] = in.get<float>("v");
    }
    if (in.remaining() != 0) throw ParseError("trailing bytes after .flo payload", in.offset());
    return flow;
}

std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
    detail::ByteWriter out;
    out.reserve(12 + flow.u.size() * 8);
    out.put(kFloTag);
    out.put<std::int32_t>(flow.width());
    out.put<std::int32_t>(flow.height());
    for (std::size_t i = 0; i < flow.u.size(); ++i) {
        out.put(flow.u[i]);
        out.put(flow.v[i]);
    }
    return std::move(out.bytes());
}

FlowField read_flo(const std::filesystem::path& path) { return parse_flo(detail::read_file_bytes(path)); }

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
    detail::write_file_bytes(path, encode_flo(flow));
}

std::filesystem::path sidecar_path(const std::filesystem::path& raw_path) {
    auto p = raw_path;
    p.replace_extension(".json");
    return p;
}

Grid<float> read_plane(const std::filesystem::path& raw_path, const std::filesystem::path& json_path) {
    const auto meta = detail::read_json(json_path);
    int width = 0, height = 0;
    try {
        width = meta.at("width").get<int>();
        height = meta.at("height").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("plane sidecar " + json_path.string() + ": " + e.what());
    }
    if (width < 0 || height < 0) throw validation_error("negative plane size in " + json_path.string());
    auto values = detail::decode_f32(detail::read_file_bytes(raw_path), raw_path.string());
    if (values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw validation_error(raw_path.string() + " holds " + std::to_string(values.size()) +
                               " floats but the sidecar declares " + std::to_string(width) + "x" +
                               std::to_string(height));
    }
    Grid<float> plane(width, height);
    plane.storage() = std::move(values);
    return plane;
}

void write_plane(const std::filesystem::path& raw_path, const std::filesystem::path& json_path,
                 const Grid<float>& plane) {
    detail::write_file_bytes(raw_path, detail::encode_f32(plane.values()));
    detail::write_json(json_path, {{"width", plane.width()}, {"height", plane.height()}});
}

}  // namespace evkit
