// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "evkit/evmask.hpp"

#include "evkit/error.hpp"

namespace evkit {

namespace {

void mark(BinaryMask& mask, std::span<const Event> events) {
    for (const auto& e : events) mask(e.x, e.y) = 1;
}

BinaryMask wide_activation(const EventStream& s, Timestamp t, std::size_t n) {
    BinaryMask m(static_cast<int>(s.width), static_cast<int>(s.height), 0);
    mark(m, window_by_count(s, t, n, WindowSide::kBefore));
    mark(m, window_by_count(s, t, n, WindowSide::kAfter));
    return m;
}

BinaryMask narrow_activation(const EventStream& s, Timestamp t, std::size_t n) {
    BinaryMask m(static_cast<int>(s.width), static_cast<int>(s.height), 0);
    mark(m, window_by_count(s, t, n - n / 2, WindowSide::kBefore));
    mark(m, window_by_count(s, t, n / 2, WindowSide::kAfter));
    return m;
}

}  // namespace

void MaskWindowConfig::validate() const {
    if (mode == MaskWindowMode::kCountBased) {
        if (n_narrow > n_wide) throw config_error("n_narrow must not exceed n_wide");
    } else {
        if (narrow_us < 0 || wide_us <= 0) throw config_error("time-mode windows need wide_us > 0 and narrow_us >= 0");
        if (narrow_us >= wide_us) throw config_error("time-mode narrow_us must be smaller than wide_us");
    }
}

BinaryMask activation_map(std::span<const Event> events, int width, int height) {
    BinaryMask m(width, height, 0);
    mark(m, events);
    return m;
}

BinaryMask event_motion_mask_simple(const BinaryMask& past, const BinaryMask& future) {
    if (!past.same_shape(future)) throw validation_error("activation maps differ in shape");
    BinaryMask out(past.width(), past.height(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (past[i] && future[i]) ? 1 : 0;
    return out;
}

BinaryMask event_motion_mask_time(const EventStream& stream, Timestamp t, Timestamp wide_us, Timestamp narrow_us) {
    const int W = static_cast<int>(stream.width);
    const int H = static_cast<int>(stream.height);
    const auto past = activation_map(window_by_time(stream, t - wide_us, t + narrow_us), W, H);
    const auto future = activation_map(window_by_time(stream, t - narrow_us, t + wide_us), W, H);
    return event_motion_mask_simple(past, future);
}

TwoScaleActivations two_scale_activations(const EventStream& stream, Timestamp t_prev, Timestamp t_cur,
                                          const MaskWindowConfig& cfg) {
    cfg.validate();
    if (t_prev > t_cur) throw config_error("t_prev must not be after t_cur");
    return {narrow_activation(stream, t_prev, cfg.n_narrow), narrow_activation(stream, t_cur, cfg.n_narrow),
            wide_activation(stream, t_prev, cfg.n_wide), wide_activation(stream, t_cur, cfg.n_wide)};
}

BinaryMask event_motion_mask_two_scale(const EventStream& stream, Timestamp t_prev, Timestamp t_cur,
                                       const MaskWindowConfig& cfg) {
    if (cfg.mode == MaskWindowMode::kTimeBased) {
        cfg.validate();
        return event_motion_mask_time(stream, t_cur, cfg.wide_us, cfg.narrow_us);
    }
    const auto a = two_scale_activations(stream, t_prev, t_cur, cfg);
    BinaryMask out(a.wide_cur.width(), a.wide_cur.height(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = ((a.narrow_prev[i] || a.narrow_cur[i]) || (a.wide_prev[i] && a.wide_cur[i])) ? 1 : 0;
    }
    return out;
}

}  // namespace evkit
