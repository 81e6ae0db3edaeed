// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evkit/evstream.hpp"
#include "evkit/grid.hpp"
#include "evkit/rng.hpp"

namespace evkit {

struct Crop {
    int x = 0;
    int y = 0;
    int width = 512;
    int height = 384;

    bool operator==(const Crop&) const = default;
};

// Maps the center of an event-density patch to a crop in RGB coordinates,
// scaling by the sensor resolution ratio and clamping the crop into the
// frame. Throws a validation error if the crop does not fit the frame.
Crop crop_from_patch(const PatchCount& patch, int patch_size, SensorSize event_sensor, SensorSize rgb_frame,
                     int crop_width = 512, int crop_height = 384);

struct CurationEntry {
    std::string sequence;
    int start_index = 0;
    Crop crop;
    double area_ratio = 0;
    std::string mask_path;

    bool operator==(const CurationEntry&) const = default;
};

enum class RejectReason { kNone, kMaskTooSmall, kDecompositionFailed };

struct CurationDecision {
    bool accepted = false;
    RejectReason reason = RejectReason::kNone;
    std::string detail;
    CurationEntry entry;  // filled in either case; ratio is informative for rejects
};

const char* to_string(RejectReason reason);

// Accepts the crop iff the cleaned mask covers at least min_area_ratio of
// it (inclusive). The mask must be crop-sized.
CurationDecision curate_crop(const BinaryMask& cleaned_mask, const Crop& crop, const std::string& sequence,
                             int start_index, const std::string& mask_path, double min_area_ratio = 0.05);

CurationDecision rejected_crop(const Crop& crop, const std::string& sequence, int start_index,
                               RejectReason reason, std::string detail);

struct StartCandidates {
    int start_index = 0;
    std::vector<CurationDecision> crops;
};

struct SequenceStats {
    std::string sequence;
    double motion_ratio = 0;  // starts with an accepted entry / all starts
    std::size_t entry_count = 0;
    std::size_t start_count = 0;
};

struct Pool {
    std::vector<CurationEntry> entries;
    SequenceStats stats;
};

inline constexpr std::size_t kMaxEntriesPerStart = 3;

// Accepted entries in (start, crop) order, at most three per start index.
Pool build_pool(const std::string& sequence, std::span<const StartCandidates> starts);

// p_i = exp(r_i / T) / sum_j exp(r_j / T)
std::vector<double> sequence_weights(std::span<const SequenceStats> stats, double temperature = 2.0);

// One CurationEntry per line.
std::string pool_to_jsonl(std::span<const CurationEntry> entries);
std::vector<CurationEntry> pool_from_jsonl(const std::string& text);
std::string stats_to_json(std::span<const SequenceStats> stats, std::span<const double> weights);

enum class QueryOrigin : std::uint8_t { kObject, kUniform };

struct QueryPoint {
    double x = 0;  // frame coordinates (crop origin + local pixel)
    double y = 0;
    double t = 0;  // query time, frame index or timestamp as supplied
    QueryOrigin origin = QueryOrigin::kUniform;

    bool operator==(const QueryPoint&) const = default;
};

struct QuerySet {
    std::vector<QueryPoint> points;
    bool fell_back_to_uniform = false;  // mask was empty

    std::size_t count(QueryOrigin origin) const;
    bool operator==(const QuerySet&) const = default;
};

// floor(object_fraction * n) points from mask pixels (without replacement
// when the mask is large enough), the rest uniformly over the crop. The mask
// is crop-local and must match the crop size.
QuerySet sample_queries(const BinaryMask& mask, const Crop& crop, std::size_t n, double object_fraction,
                        double t_query, Rng& rng);

struct SampleJob {
    BinaryMask mask;
    Crop crop;
    double t_query = 0;
};

// Samples each job with its own generator seeded from (seed, job index), so
// the output does not depend on the worker count.
std::vector<QuerySet> sample_queries_batch(std::span<const SampleJob> jobs, std::size_t n, double object_fraction,
                                           std::uint64_t seed, unsigned workers);

std::string queries_to_csv(const QuerySet& set);

}  // namespace evkit
