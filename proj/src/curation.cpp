// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "evkit/curation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "evkit/error.hpp"
#include "io_util.hpp"

namespace evkit {

Crop crop_from_patch(const PatchCount& patch, int patch_size, SensorSize event_sensor, SensorSize rgb_frame,
                     int crop_width, int crop_height) {
    if (event_sensor.width == 0 || event_sensor.height == 0) throw config_error("event sensor size is zero");
    if (crop_width > static_cast<int>(rgb_frame.width) || crop_height > static_cast<int>(rgb_frame.height)) {
        throw validation_error("crop " + std::to_string(crop_width) + "x" + std::to_string(crop_height) +
                               " does not fit the " + std::to_string(rgb_frame.width) + "x" +
                               std::to_string(rgb_frame.height) + " frame");
    }
    // Patch center in event pixels, clipped to the sensor for partial edge cells.
    const double cx_ev = std::min((patch.col + 0.5) * patch_size, static_cast<double>(event_sensor.width));
    const double cy_ev = std::min((patch.row + 0.5) * patch_size, static_cast<double>(event_sensor.height));
    const double cx = cx_ev * rgb_frame.width / event_sensor.width;
    const double cy = cy_ev * rgb_frame.height / event_sensor.height;
    Crop c;
    c.width = crop_width;
    c.height = crop_height;
    c.x = static_cast<int>(std::lround(cx - crop_width / 2.0));
    c.y = static_cast<int>(std::lround(cy - crop_height / 2.0));
    c.x = std::clamp(c.x, 0, static_cast<int>(rgb_frame.width) - crop_width);
    c.y = std::clamp(c.y, 0, static_cast<int>(rgb_frame.height) - crop_height);
    return c;
}

const char* to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::kNone: return "accepted";
        case RejectReason::kMaskTooSmall: return "mask_too_small";
        case RejectReason::kDecompositionFailed: return "decomposition_failed";
    }
    return "unknown";
}

CurationDecision curate_crop(const BinaryMask& cleaned_mask, const Crop& crop, const std::string& sequence,
                             int start_index, const std::string& mask_path, double min_area_ratio) {
    if (cleaned_mask.width() != crop.width || cleaned_mask.height() != crop.height) {
        throw validation_error("mask size does not match the crop size");
    }
    CurationDecision d;
    const auto area = static_cast<double>(crop.width) * static_cast<double>(crop.height);
    d.entry = {sequence, start_index, crop, area > 0 ? static_cast<double>(count_set(cleaned_mask)) / area : 0.0,
               mask_path};
    d.accepted = d.entry.area_ratio >= min_area_ratio && d.entry.area_ratio > 0;
    d.reason = d.accepted ? RejectReason::kNone : RejectReason::kMaskTooSmall;
    return d;
}

CurationDecision rejected_crop(const Crop& crop, const std::string& sequence, int start_index, RejectReason reason,
                               std::string detail) {
    CurationDecision d;
    d.reason = reason;
    d.detail = std::move(detail);
    d.entry = {sequence, start_index, crop, 0.0, ""};
    return d;
}

Pool build_pool(const std::string& sequence, std::span<const StartCandidates> starts) {
    Pool pool;
    std::size_t starts_with_motion = 0;
    for (const auto& s : starts) {
        std::size_t taken = 0;
        for (const auto& c : s.crops) {
            if (!c.accepted || taken == kMaxEntriesPerStart) continue;
            pool.entries.push_back(c.entry);
            ++taken;
        }
        starts_with_motion += taken > 0;
    }
    pool.stats.sequence = sequence;
    pool.stats.start_count = starts.size();
    pool.stats.entry_count = pool.entries.size();
    pool.stats.motion_ratio =
        starts.empty() ? 0.0 : static_cast<double>(starts_with_motion) / static_cast<double>(starts.size());
    return pool;
}

std::vector<double> sequence_weights(std::span<const SequenceStats> stats, double temperature) {
    if (stats.empty()) throw empty_input_error("sequence_weights needs at least one sequence");
    if (!(temperature > 0)) throw config_error("softmax temperature must be positive");
    double top = stats[0].motion_ratio;
    for (const auto& s : stats) top = std::max(top, s.motion_ratio);
    std::vector<double> p(stats.size());
    double sum = 0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        p[i] = std::exp((stats[i].motion_ratio - top) / temperature);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

std::string pool_to_jsonl(std::span<const CurationEntry> entries) {
    std::string out;
    for (const auto& e : entries) {
        nlohmann::json j = {{"sequence", e.sequence},
                            {"start", e.start_index},
                            {"crop", {{"x", e.crop.x}, {"y", e.crop.y}, {"w", e.crop.width}, {"h", e.crop.height}}},
                            {"area_ratio", e.area_ratio},
                            {"mask", e.mask_path}};
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<CurationEntry> pool_from_jsonl(const std::string& text) {
    std::vector<CurationEntry> out;
    std::istringstream in(text);
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const auto line_offset = offset;
        offset += line.size() + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            CurationEntry e;
            e.sequence = j.at("sequence").get<std::string>();
            e.start_index = j.at("start").get<int>();
            const auto& c = j.at("crop");
            e.crop = {c.at("x").get<int>(), c.at("y").get<int>(), c.at("w").get<int>(), c.at("h").get<int>()};
            e.area_ratio = j.at("area_ratio").get<double>();
            e.mask_path = j.at("mask").get<std::string>();
            out.push_back(std::move(e));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad pool entry: ") + e.what(), line_offset);
        }
    }
    return out;
}

std::string stats_to_json(std::span<const SequenceStats> stats, std::span<const double> weights) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < stats.size(); ++i) {
        nlohmann::json j = {{"sequence", stats[i].sequence},
                            {"motion_ratio", stats[i].motion_ratio},
                            {"entries", stats[i].entry_count},
                            {"starts", stats[i].start_count}};
        if (i < weights.size()) j["weight"] = weights[i];
        arr.push_back(std::move(j));
    }
    return nlohmann::json{{"sequences", arr}}.dump(2) + "\n";
}

std::size_t QuerySet::count(QueryOrigin origin) const {
    return static_cast<std::size_t>(
        std::count_if(points.begin(), points.end(), [&](const QueryPoint& p) { return p.origin == origin; }));
}

QuerySet sample_queries(const BinaryMask& mask, const Crop& crop, std::size_t n, double object_fraction,
                        double t_query, Rng& rng) {
    if (n < 1) throw config_error("N_q must be >= 1");
    if (!(object_fraction >= 0.0 && object_fraction <= 1.0)) throw config_error("object fraction must lie in [0, 1]");
    if (mask.width() != crop.width || mask.height() != crop.height) {
        throw validation_error("mask size does not match the crop size");
    }
    // The epsilon absorbs binary representation error, e.g. 0.9 * 10 -> 9.
    auto n_obj = static_cast<std::size_t>(std::floor(object_fraction * static_cast<double>(n) + 1e-9));
    n_obj = std::min(n_obj, n);

    std::vector<std::size_t> on_mask;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) on_mask.push_back(i);
    }

    QuerySet set;
    if (on_mask.empty() && n_obj > 0) {
        set.fell_back_to_uniform = true;
        n_obj = 0;
    }
    set.points.reserve(n);
    const auto W = static_cast<std::size_t>(crop.width);
    auto emit = [&](std::size_t pixel, QueryOrigin origin) {
        set.points.push_back({static_cast<double>(crop.x) + static_cast<double>(pixel % W),
                              static_cast<double>(crop.y) + static_cast<double>(pixel / W), t_query, origin});
    };

    if (n_obj <= on_mask.size()) {
        // Partial Fisher-Yates: the first n_obj slots become a uniform draw
        // without replacement.
        for (std::size_t i = 0; i < n_obj; ++i) {
            const auto j = i + rng.below(on_mask.size() - i);
            std::swap(on_mask[i], on_mask[j]);
            emit(on_mask[i], QueryOrigin::kObject);
        }
    } else {
        for (std::size_t i = 0; i < n_obj; ++i) emit(on_mask[rng.below(on_mask.size())], QueryOrigin::kObject);
    }
    const auto crop_pixels = W * static_cast<std::size_t>(crop.height);
    for (std::size_t i = n_obj; i < n; ++i) emit(rng.below(crop_pixels), QueryOrigin::kUniform);
    return set;
}

std::vector<QuerySet> sample_queries_batch(std::span<const SampleJob> jobs, std::size_t n, double object_fraction,
                                           std::uint64_t seed, unsigned workers) {
    std::vector<QuerySet> out(jobs.size());
    auto run = [&](std::size_t i) {
        Rng rng(Rng::derive(seed, i));
        out[i] = sample_queries(jobs[i].mask, jobs[i].crop, n, object_fraction, jobs[i].t_query, rng);
    };
    workers = std::max(1u, workers);
    if (workers == 1 || jobs.size() < 2) {
        for (std::size_t i = 0; i < jobs.size(); ++i) run(i);
        return out;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < jobs.size(); i += workers) run(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

std::string queries_to_csv(const QuerySet& set) {
    std::ostringstream out;
    out.precision(17);
    out << "x,y,t,origin\n";
    for (const auto& p : set.points) {
        out << p.x << ',' << p.y << ',' << p.t << ',' << (p.origin == QueryOrigin::kObject ? "object" : "uniform")
            << '\n';
    }
    return out.str();
}

}  // namespace evkit
