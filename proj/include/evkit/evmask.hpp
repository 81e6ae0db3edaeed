// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "evkit/evstream.hpp"
#include "evkit/grid.hpp"

namespace evkit {

enum class MaskWindowMode { kCountBased, kTimeBased };

struct MaskWindowConfig {
    std::size_t n_wide = 10000;
    std::size_t n_narrow = 1000;
    MaskWindowMode mode = MaskWindowMode::kCountBased;
    // Time mode only: windows [t - wide_us, t + narrow_us] and
    // [t - narrow_us, t + wide_us]. No defaults; the caller must set both.
    Timestamp wide_us = 0;
    Timestamp narrow_us = 0;

    void validate() const;
};

// Pixel set iff at least one event fired there (polarity is ignored).
BinaryMask activation_map(std::span<const Event> events, int width, int height);

// Pixelwise AND. Throws a validation error on shape mismatch.
BinaryMask event_motion_mask_simple(const BinaryMask& past, const BinaryMask& future);

// Time-window intersection form at a single frame time t.
BinaryMask event_motion_mask_time(const EventStream& stream, Timestamp t, Timestamp wide_us, Timestamp narrow_us);

// The four activation maps of the two-scale mask.
struct TwoScaleActivations {
    BinaryMask narrow_prev;
    BinaryMask narrow_cur;
    BinaryMask wide_prev;
    BinaryMask wide_cur;
};

// Wide: n_wide events before plus n_wide after the frame time. Narrow: the
// n_narrow events around it, ceil(n/2) before and floor(n/2) after.
TwoScaleActivations two_scale_activations(const EventStream& stream, Timestamp t_prev, Timestamp t_cur,
                                          const MaskWindowConfig& cfg);

// (narrow_prev | narrow_cur) | (wide_prev & wide_cur). In time mode this
// falls back to event_motion_mask_time at t_cur.
BinaryMask event_motion_mask_two_scale(const EventStream& stream, Timestamp t_prev, Timestamp t_cur,
                                       const MaskWindowConfig& cfg);

}  // namespace evkit
