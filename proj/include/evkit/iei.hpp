// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evkit/evstream.hpp"

namespace evkit {

// Intervals between consecutive events at the same pixel, regardless of
// polarity. Emitted in stream order of the later event of each pair.
std::vector<std::int64_t> compute_iei(const EventStream& stream);

struct IeiHistogram {
    int bins = 200;
    double iei_max = 0.0;    // microseconds
    double bin_width = 0.0;  // iei_max / bins
    std::int64_t total_samples = 0;
    double mean = 0.0;  // mean interval, microseconds
    std::vector<std::int64_t> counts;
    std::vector<double> density;  // counts / (total * bin_width)

    double bin_left(int b) const { return bin_width * b; }
};

// 99.9th percentile (linear interpolation between order statistics).
double auto_iei_max(std::span<const std::int64_t> intervals);

// Uniform bins on [0, iei_max]; values above iei_max land in the last bin.
// With iei_max unset the 99.9th percentile is used. Throws "no intervals" on
// empty input.
IeiHistogram iei_histogram(std::span<const std::int64_t> intervals, int bins = 200,
                           std::optional<double> iei_max = std::nullopt);

struct IeiComparison {
    IeiHistogram real;
    IeiHistogram synth;
    double mean_real = 0.0;
    double mean_synth = 0.0;
    double mean_ratio = 0.0;  // mean_synth / mean_real
};

// Both histograms share one range: iei_max if given, otherwise the larger of
// the two automatic ranges.
IeiComparison compare_streams(const EventStream& real, const EventStream& synth, int bins = 200,
                              std::optional<double> iei_max = std::nullopt);

// "bin_left_us,density" rows.
std::string histogram_csv(const IeiHistogram& hist);

}  // namespace evkit
