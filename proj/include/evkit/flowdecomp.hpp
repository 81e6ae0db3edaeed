// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evkit/flow.hpp"
#include "evkit/grid.hpp"
#include "evkit/mask.hpp"
#include "evkit/rng.hpp"

namespace evkit {

// 2x3 model mapping [x, y, 1] to predicted flow (u, v).
struct AffineModel {
    std::array<std::array<double, 3>, 2> a{};

    double predict_u(double x, double y) const { return a[0][0] * x + a[0][1] * y + a[0][2]; }
    double predict_v(double x, double y) const { return a[1][0] * x + a[1][1] * y + a[1][2]; }

    bool operator==(const AffineModel&) const = default;
};

// {"a": [[a11,a12,a13],[a21,a22,a23]]}
std::string affine_to_json(const AffineModel& model);
AffineModel affine_from_json(const std::string& text);

struct RansacConfig {
    double reproj_threshold = 2.0;    // px
    int iterations = 500;
    double second_pass_discard = 0.20;
    double min_flow_mag = 0.5;        // px
    double vis_min = 0.5;
    double conf_min = 0.3;
    std::size_t max_points = 20000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct FlowSample {
    double x = 0;
    double y = 0;
    double u = 0;
    double v = 0;
    double weight = 1;  // teacher confidence

    bool operator==(const FlowSample&) const = default;
};

// Keeps pixels passing the visibility, confidence and magnitude filters
// (missing maps count as 1). Above max_points, draws a confidence-weighted
// subsample without replacement; the result stays in raster order.
// Throws insufficient-support when fewer than 3 samples survive.
std::vector<FlowSample> collect_valid_flow(const FlowField& flow, const RansacConfig& cfg, Rng& rng);

// Pools (position, flow) pairs across several frames of the same crop.
std::vector<FlowSample> collect_valid_flow(std::span<const FlowField> frames, const RansacConfig& cfg, Rng& rng);

// Exact affine through three correspondences; nullopt when the triangle area
// is below 1e-6 px^2.
std::optional<AffineModel> solve_affine_minimal(const FlowSample& s0, const FlowSample& s1, const FlowSample& s2);

// Weighted least squares over all samples (uniform weights if every weight is
// zero). Throws degenerate-geometry when the positions are collinear.
AffineModel fit_affine_weighted(std::span<const FlowSample> samples);

double reprojection_error(const AffineModel& model, const FlowSample& s);

struct RansacResult {
    AffineModel model;       // second pass
    AffineModel first_pass;  // refit on first-pass consensus
    std::size_t inliers = 0;
    std::size_t kept = 0;    // samples used by the second-pass refit
    int degenerate_draws = 0;
};

// First pass: random 3-point hypotheses scored by inlier count, then a
// weighted refit on the best consensus set. Second pass: drop the worst
// second_pass_discard fraction of that consensus set under the first-pass
// model and refit again.
RansacResult fit_affine_ransac(std::span<const FlowSample> samples, const RansacConfig& cfg, Rng& rng);

// r(x) = |F(x) - A [x, y, 1]^T|_2
Grid<double> residual_flow(const FlowField& flow, const AffineModel& model);

// g(x) = [v(x) >= vis_min] * clip(c(x), 0, 1)^exponent
Grid<double> confidence_gate(const Grid<float>& visibility, const Grid<float>& confidence,
                             double vis_min = 0.5, double exponent = 2.0);

// Median of a copy; the mean of the two middle values for even sizes.
double median_of(std::span<const double> values);

struct MadThreshold {
    double median = 0;
    double mad = 0;
    double tau = 0;
};

inline constexpr double kMadConsistency = 1.4826;

// tau = median + k_mad * 1.4826 * median(|x - median|)
MadThreshold mad_threshold(std::span<const double> values, double k_mad = 4.0);

// Marks pixels where r * g > tau, computed over the gated residual.
BinaryMask object_motion_mask(const Grid<double>& residual, const Grid<double>& gate, double k_mad = 4.0,
                              MadThreshold* threshold_out = nullptr);

struct DecompositionConfig {
    RansacConfig ransac;
    double k_mad = 4.0;
    double gate_exponent = 2.0;
    CleanupConfig cleanup;
};

struct Decomposition {
    RansacResult fit;
    std::size_t samples = 0;
    Grid<double> residual;
    Grid<double> gate;
    MadThreshold threshold;
    BinaryMask raw_mask;
    BinaryMask mask;  // after cleanup
};

// Fits one affine model to the pooled frames and builds the cleaned object
// mask on frames[reference].
Decomposition decompose_flow(std::span<const FlowField> frames, std::size_t reference,
                             const DecompositionConfig& cfg);

}  // namespace evkit
