// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "evkit/iei.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "evkit/error.hpp"

namespace evkit {

namespace {

constexpr Timestamp kNoEvent = std::numeric_limits<Timestamp>::min();

double mean_of(std::span<const std::int64_t> values) {
    // Integer sum is exact up to ~9.2e18 us of accumulated interval.
    long double sum = 0;
    for (auto v : values) sum += static_cast<long double>(v);
    return static_cast<double>(sum / static_cast<long double>(values.size()));
}

}  // namespace

std::vector<std::int64_t> compute_iei(const EventStream& stream) {
    std::vector<Timestamp> last(static_cast<std::size_t>(stream.width) * stream.height, kNoEvent);
    std::vector<std::int64_t> out;
    out.reserve(stream.events.size());
    const std::size_t W = stream.width;
    for (const auto& e : stream.events) {
        Timestamp& prev = last[static_cast<std::size_t>(e.y) * W + e.x];
        if (prev != kNoEvent) out.push_back(e.t - prev);
        prev = e.t;
    }
    return out;
}

double auto_iei_max(std::span<const std::int64_t> intervals) {
    if (intervals.empty()) throw empty_input_error("no intervals");
    std::vector<std::int64_t> sorted(intervals.begin(), intervals.end());
    const double pos = 0.999 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(lo), sorted.end());
    const double v_lo = static_cast<double>(sorted[lo]);
    double v_hi = v_lo;
    if (hi != lo) {
        v_hi = static_cast<double>(*std::min_element(sorted.begin() + static_cast<std::ptrdiff_t>(hi), sorted.end()));
    }
    return v_lo + (pos - static_cast<double>(lo)) * (v_hi - v_lo);
}

IeiHistogram iei_histogram(std::span<const std::int64_t> intervals, int bins, std::optional<double> iei_max) {
    if (bins < 1) throw config_error("histogram bins must be >= 1");
    if (intervals.empty()) throw empty_input_error("no intervals");
    double range = iei_max ? *iei_max : auto_iei_max(intervals);
    if (iei_max && !(range > 0.0 && std::isfinite(range))) {
        throw config_error("iei_max must be a positive finite number of microseconds");
    }
    // All-zero intervals give a zero percentile; fall back to a 1 us range.
    if (range <= 0.0) range = 1.0;

    IeiHistogram h;
    h.bins = bins;
    h.iei_max = range;
    h.bin_width = range / bins;
    h.total_samples = static_cast<std::int64_t>(intervals.size());
    h.mean = mean_of(intervals);
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    const double scale = static_cast<double>(bins) / range;
    for (auto v : intervals) {
        const double pos = static_cast<double>(v) * scale;
        const auto b = pos >= bins ? bins - 1 : static_cast<int>(pos);
        h.counts[static_cast<std::size_t>(std::max(b, 0))]++;
    }
    h.density.resize(h.counts.size());
    const double norm = static_cast<double>(h.total_samples) * h.bin_width;
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        h.density[b] = static_cast<double>(h.counts[b]) / norm;
    }
    return h;
}

IeiComparison compare_streams(const EventStream& real, const EventStream& synth, int bins,
                              std::optional<double> iei_max) {
    const auto real_iei = compute_iei(real);
    if (real_iei.empty()) throw empty_input_error("no intervals in real stream");
    const auto synth_iei = compute_iei(synth);
    if (synth_iei.empty()) throw empty_input_error("no intervals in synthetic stream");

    double range = iei_max ? *iei_max : std::max(auto_iei_max(real_iei), auto_iei_max(synth_iei));
    if (!iei_max && range <= 0.0) range = 1.0;

    IeiComparison out;
    out.real = iei_histogram(real_iei, bins, range);
    out.synth = iei_histogram(synth_iei, bins, range);
    out.mean_real = out.real.mean;
    out.mean_synth = out.synth.mean;
    out.mean_ratio = out.mean_synth / out.mean_real;
    return out;
}

std::string histogram_csv(const IeiHistogram& hist) {
    std::ostringstream out;
    out.precision(17);
    out << "bin_left_us,density\n";
    for (int b = 0; b < hist.bins; ++b) {
        out << hist.bin_left(b) << ',' << hist.density[static_cast<std::size_t>(b)] << '\n';
    }
    return out.str();
}

}  // namespace evkit
