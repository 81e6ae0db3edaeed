// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evkit/grid.hpp"

namespace evkit {

// Timestamps are microseconds throughout.
using Timestamp = std::int64_t;

struct Event {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    Timestamp t = 0;
    std::int8_t p = 1;  // -1 or +1

    bool operator==(const Event&) const = default;
};

struct SensorSize {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
};

// Time-sorted events with the sensor geometry they were recorded on.
struct EventStream {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<Event> events;

    std::size_t size() const noexcept { return events.size(); }
    bool empty() const noexcept { return events.empty(); }
};

// Throws a validation error naming the first out-of-bounds or zero-polarity
// event (index into `events`).
void validate_events(std::span<const Event> events, std::uint32_t width, std::uint32_t height);

// Stable sort by timestamp; equal timestamps keep their original order.
void sort_by_time(std::vector<Event>& events);

// ---------------------------------------------------------------------------
// File formats

enum class EventFormat { kTetoEvt1, kCsv };

// Picks CSV for a ".csv" extension, TETOEVT1 otherwise.
EventFormat guess_event_format(const std::filesystem::path& path);

// TETOEVT1: "TETOEVT1", u32 width, u32 height, u64 count, then count packed
// records {u16 x, u16 y, i64 t_us, i8 p}, all little-endian.
// CSV: header "x,y,t_us,p" and one event per row; CSV carries no geometry so
// `sensor` must be given for it.
EventStream load_events(const std::filesystem::path& path, EventFormat format,
                        std::optional<SensorSize> sensor = std::nullopt);

EventStream parse_tetoevt1(std::span<const std::uint8_t> bytes);
EventStream parse_events_csv(const std::string& text, SensorSize sensor);

std::vector<std::uint8_t> encode_tetoevt1(const EventStream& stream);
std::string encode_events_csv(const EventStream& stream);

void save_events(const std::filesystem::path& path, const EventStream& stream, EventFormat format);

// ---------------------------------------------------------------------------
// Event stacks

struct StackConfig {
    std::int64_t total_events = 300000;  // N
    int bins = 10;                       // B

    // Throws a config error for N < 1 or B < 1 (or B > 62). Returns warnings,
    // e.g. when N < 2^(B-1) so the smallest bins collapse to the 1-event floor.
    std::vector<std::string> validate() const;
};

// Events in bin b (1-indexed): floor(N / 2^(B-b)), at least 1.
std::int64_t bin_quota(const StackConfig& cfg, int b);

// H x W x B signed accumulation, channel-last: data[(y*W + x)*B + bin].
struct EventStack {
    int width = 0;
    int height = 0;
    int bins = 0;
    Timestamp t_ref = 0;
    std::vector<std::int64_t> counts;  // realized events per bin
    std::vector<std::int32_t> data;

    std::int32_t at(int x, int y, int bin) const {
        return data[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                     static_cast<std::size_t>(x)) *
                        static_cast<std::size_t>(bins) +
                    static_cast<std::size_t>(bin)];
    }

    std::vector<float> to_float() const;
};

// Bin b holds the most recent quota(b) events with timestamp <= t, clamped to
// what is available.
EventStack build_event_stack(const EventStream& stream, Timestamp t, const StackConfig& cfg);

// Writes raw float32 little-endian data to `bin_path` and a JSON sidecar
// {width, height, B, t_ref, counts} to `json_path`.
void write_event_stack(const EventStack& stack, const std::filesystem::path& bin_path,
                       const std::filesystem::path& json_path);

// output(x, y) = sum of polarities of events at (x, y).
Grid<std::int32_t> accumulate_polarity(std::span<const Event> events, int width, int height);

struct PatchCount {
    int row = 0;
    int col = 0;
    std::int64_t count = 0;

    bool operator==(const PatchCount&) const = default;
};

// The k patch x patch cells with the most events, ties broken by row-major
// cell index. Empty cells are never returned.
std::vector<PatchCount> event_density_topk(std::span<const Event> events, int width, int height,
                                           int patch = 64, int k = 3);

enum class WindowSide { kBefore, kAfter };

// kBefore: the up-to-n latest events with t_i <= t. kAfter: the up-to-n
// earliest events with t_i > t. Both in time order, as a view into `stream`.
std::span<const Event> window_by_count(const EventStream& stream, Timestamp t, std::size_t n,
                                       WindowSide side);

// Events with t_i in [begin, end], inclusive on both ends.
std::span<const Event> window_by_time(const EventStream& stream, Timestamp begin, Timestamp end);

}  // namespace evkit
