// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evkit/grid.hpp"

namespace evkit {

inline constexpr std::array<int, 6> kOatsThresholds = {0, 1, 2, 4, 8, 16};

// Sets every pixel within Euclidean distance `radius` of a set pixel
// (offsets with dx^2 + dy^2 <= radius^2). radius 0 is the identity.
BinaryMask dilate_mask(const BinaryMask& mask, int radius);

struct TrackPoint {
    float x = 0;
    float y = 0;
    float visibility = 0;

    bool operator==(const TrackPoint&) const = default;
};

// N_q queries x T frames of predicted positions.
struct TrajectorySet {
    std::uint32_t queries = 0;
    std::uint32_t frames = 0;
    std::vector<std::uint32_t> query_frame;  // per query
    std::vector<TrackPoint> points;          // [query * frames + frame]

    TrajectorySet() = default;
    TrajectorySet(std::uint32_t n_queries, std::uint32_t n_frames)
        : queries(n_queries),
          frames(n_frames),
          query_frame(n_queries, 0),
          points(static_cast<std::size_t>(n_queries) * n_frames) {}

    TrackPoint& at(std::uint32_t q, std::uint32_t t) { return points[static_cast<std::size_t>(q) * frames + t]; }
    const TrackPoint& at(std::uint32_t q, std::uint32_t t) const {
        return points[static_cast<std::size_t>(q) * frames + t];
    }

    // Finite positions, visibility in [0, 1], query frames < T.
    void validate() const;
};

// TETOTRK1: "TETOTRK1", u32 N_q, u32 T, then per query {u32 query_frame,
// T x (f32 x, f32 y, f32 visibility)}, little-endian.
TrajectorySet parse_tetotrk1(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_tetotrk1(const TrajectorySet& traj);
TrajectorySet read_tetotrk1(const std::filesystem::path& path);
void write_tetotrk1(const std::filesystem::path& path, const TrajectorySet& traj);

// Per-frame object masks keyed by object id. Frames without an entry for an
// object are treated as an empty mask for it.
struct ObjectMaskSequence {
    int width = 0;
    int height = 0;
    std::vector<std::map<int, BinaryMask>> frames;

    const BinaryMask* find(std::size_t frame, int object) const;
};

// JSON manifest {"<frame>": {"<object id>": "mask.pgm", ...}, ...}; mask
// paths are relative to the manifest's directory.
ObjectMaskSequence load_mask_manifest(const std::filesystem::path& manifest_path);

// Rounds half away from zero; returns false outside the frame.
bool rasterize(float x, float y, int width, int height, int& px, int& py);

struct QueryAssignment {
    std::vector<std::optional<int>> object;  // per query; nullopt = not evaluated
    std::size_t evaluable = 0;
};

// A query is evaluated iff its rounded position at its query frame lies in
// the event mask (when given) and in some object mask at that frame. On
// overlap the smallest-area object wins, then the smallest id. Throws
// "no adherent queries" when none qualifies.
QueryAssignment assign_queries(const TrajectorySet& traj, const ObjectMaskSequence& masks,
                               const BinaryMask* event_mask = nullptr);

struct OatsReport {
    std::array<double, 6> scores{};  // aligned with kOatsThresholds
    double average = 0;
    std::size_t queries_scored = 0;
    std::size_t queries_excluded = 0;  // assigned but never visible
    std::size_t frames_evaluated = 0;  // sum of |V_j| over scored queries
};

// Mean of the six per-threshold scores.
double oats_average(std::span<const double, 6> scores);

// Per query, the fraction of visible non-query frames (v >= 0.5) whose
// rounded prediction falls inside the object's mask dilated by delta; then
// the mean over queries. Out-of-frame predictions never adhere.
double oats_delta(const TrajectorySet& traj, const ObjectMaskSequence& masks, const QueryAssignment& assignment,
                  int delta, unsigned workers = 1);

OatsReport oats_suite(const TrajectorySet& traj, const ObjectMaskSequence& masks, const QueryAssignment& assignment,
                      unsigned workers = 1);

struct SceneReport {
    std::string scene;
    std::string model;
    OatsReport report;
};

// Header "scene,model,oats_0,oats_1,oats_2,oats_4,oats_8,oats_16,oats_avg".
std::string oats_csv(std::span<const SceneReport> scenes);
std::string oats_json(std::span<const SceneReport> scenes);

}  // namespace evkit
