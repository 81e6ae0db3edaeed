// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "evkit/flowdecomp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "evkit/error.hpp"
#include "io_util.hpp"

namespace evkit {

namespace {

constexpr double kMinTriangleArea = 1e-6;

double triangle_area(const FlowSample& a, const FlowSample& b, const FlowSample& c) {
    return 0.5 * std::abs((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

// True when some triple of positions spans at least the minimum area. Picks
// the point farthest from the first, then the point farthest from that line.
bool has_spanning_triple(std::span<const FlowSample> s) {
    if (s.size() < 3) return false;
    std::size_t far = 0;
    double best = -1;
    for (std::size_t i = 1; i < s.size(); ++i) {
        const double d = (s[i].x - s[0].x) * (s[i].x - s[0].x) + (s[i].y - s[0].y) * (s[i].y - s[0].y);
        if (d > best) {
            best = d;
            far = i;
        }
    }
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (triangle_area(s[0], s[far], s[i]) >= kMinTriangleArea) return true;
    }
    return false;
}

void append_valid(const FlowField& flow, const RansacConfig& cfg, std::vector<FlowSample>& out) {
    flow.validate();
    for (int y = 0; y < flow.height(); ++y) {
        for (int x = 0; x < flow.width(); ++x) {
            const double vis = flow.visibility ? (*flow.visibility)(x, y) : 1.0;
            const double conf = flow.confidence ? (*flow.confidence)(x, y) : 1.0;
            const double u = flow.u(x, y);
            const double v = flow.v(x, y);
            if (vis < cfg.vis_min || conf < cfg.conf_min) continue;
            if (std::hypot(u, v) < cfg.min_flow_mag) continue;
            out.push_back({static_cast<double>(x), static_cast<double>(y), u, v, conf});
        }
    }
}

// Weighted sampling without replacement (exponential-key method): keep the
// max_points largest log(U)/w.
std::vector<FlowSample> cap_samples(std::vector<FlowSample> samples, std::size_t max_points, Rng& rng) {
    if (samples.size() < 3) {
        throw Error(ErrorKind::kInsufficientSupport,
                    "only " + std::to_string(samples.size()) + " valid flow samples; need at least 3");
    }
    if (samples.size() <= max_points) return samples;
    std::vector<double> keys(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double u = 1.0 - rng.uniform();  // (0, 1]
        const double w = samples[i].weight;
        keys[i] = w > 0 ? std::log(u) / w : -std::numeric_limits<double>::infinity();
    }
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(max_points), order.end(),
                     [&](std::size_t a, std::size_t b) { return keys[a] != keys[b] ? keys[a] > keys[b] : a < b; });
    order.resize(max_points);
    std::sort(order.begin(), order.end());
    std::vector<FlowSample> out;
    out.reserve(max_points);
    for (auto i : order) out.push_back(samples[i]);
    if (out.size() < 3) {
        throw Error(ErrorKind::kInsufficientSupport, "max_points leaves fewer than 3 flow samples");
    }
    return out;
}

std::vector<FlowSample> pick(std::span<const FlowSample> samples, std::span<const std::size_t> idx) {
    std::vector<FlowSample> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(samples[i]);
    return out;
}

}  // namespace

std::string affine_to_json(const AffineModel& model) {
    nlohmann::json j = {{"a", {{model.a[0][0], model.a[0][1], model.a[0][2]},
                               {model.a[1][0], model.a[1][1], model.a[1][2]}}}};
    return j.dump(2) + "\n";
}

AffineModel affine_from_json(const std::string& text) {
    AffineModel m;
    try {
        const auto j = nlohmann::json::parse(text);
        const auto& a = j.at("a");
        if (a.size() != 2 || a[0].size() != 3 || a[1].size() != 3) {
            throw validation_error("affine JSON must hold a 2x3 matrix under \"a\"");
        }
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 3; ++c) m.a[r][c] = a[r][c].get<double>();
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid affine JSON: ") + e.what(), e.byte);
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("invalid affine JSON: ") + e.what());
    }
    return m;
}

void RansacConfig::validate() const {
    if (!(second_pass_discard > 0.0 && second_pass_discard < 1.0)) {
        throw config_error("second_pass_discard must lie in (0, 1)");
    }
    if (reproj_threshold < 0 || min_flow_mag < 0 || vis_min < 0 || conf_min < 0) {
        throw config_error("RANSAC thresholds must be non-negative");
    }
    if (iterations < 1) throw config_error("RANSAC iterations must be >= 1");
    if (max_points < 3) throw config_error("max_points must be >= 3");
}

std::vector<FlowSample> collect_valid_flow(const FlowField& flow, const RansacConfig& cfg, Rng& rng) {
    return collect_valid_flow(std::span<const FlowField>(&flow, 1), cfg, rng);
}

std::vector<FlowSample> collect_valid_flow(std::span<const FlowField> frames, const RansacConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<FlowSample> samples;
    for (const auto& f : frames) append_valid(f, cfg, samples);
    return cap_samples(std::move(samples), cfg.max_points, rng);
}

std::optional<AffineModel> solve_affine_minimal(const FlowSample& s0, const FlowSample& s1, const FlowSample& s2) {
    if (triangle_area(s0, s1, s2) < kMinTriangleArea) return std::nullopt;
    // Shift to s0 so the solve works on small differences.
    const double x1 = s1.x - s0.x, y1 = s1.y - s0.y;
    const double x2 = s2.x - s0.x, y2 = s2.y - s0.y;
    const double det = x1 * y2 - x2 * y1;
    AffineModel m;
    const double du1 = s1.u - s0.u, du2 = s2.u - s0.u;
    const double dv1 = s1.v - s0.v, dv2 = s2.v - s0.v;
    m.a[0][0] = (du1 * y2 - du2 * y1) / det;
    m.a[0][1] = (x1 * du2 - x2 * du1) / det;
    m.a[1][0] = (dv1 * y2 - dv2 * y1) / det;
    m.a[1][1] = (x1 * dv2 - x2 * dv1) / det;
    m.a[0][2] = s0.u - m.a[0][0] * s0.x - m.a[0][1] * s0.y;
    m.a[1][2] = s0.v - m.a[1][0] * s0.x - m.a[1][1] * s0.y;
    return m;
}

AffineModel fit_affine_weighted(std::span<const FlowSample> samples) {
    if (!has_spanning_triple(samples)) throw degenerate_error("degenerate geometry: sample positions are collinear");
    double wsum = 0;
    for (const auto& s : samples) wsum += s.weight;
    const bool uniform = !(wsum > 0);
    if (uniform) wsum = static_cast<double>(samples.size());

    double cx = 0, cy = 0;
    for (const auto& s : samples) {
        const double w = uniform ? 1.0 : s.weight;
        cx += w * s.x;
        cy += w * s.y;
    }
    cx /= wsum;
    cy /= wsum;

    const auto n = static_cast<Eigen::Index>(samples.size());
    Eigen::MatrixXd X(n, 3);
    Eigen::MatrixXd Y(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        const double sw = std::sqrt(uniform ? 1.0 : s.weight);
        X(i, 0) = sw * (s.x - cx);
        X(i, 1) = sw * (s.y - cy);
        X(i, 2) = sw;
        Y(i, 0) = sw * s.u;
        Y(i, 1) = sw * s.v;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < 3) throw degenerate_error("degenerate geometry: weighted design matrix is rank deficient");
    const Eigen::MatrixXd P = qr.solve(Y);

    AffineModel m;
    for (int r = 0; r < 2; ++r) {
        m.a[r][0] = P(0, r);
        m.a[r][1] = P(1, r);
        m.a[r][2] = P(2, r) - P(0, r) * cx - P(1, r) * cy;
    }
    return m;
}

double reprojection_error(const AffineModel& model, const FlowSample& s) {
    return std::hypot(s.u - model.predict_u(s.x, s.y), s.v - model.predict_v(s.x, s.y));
}

RansacResult fit_affine_ransac(std::span<const FlowSample> samples, const RansacConfig& cfg, Rng& rng) {
    cfg.validate();
    if (samples.size() < 3) {
        throw Error(ErrorKind::kInsufficientSupport, "RANSAC needs at least 3 samples");
    }
    if (!has_spanning_triple(samples)) {
        throw degenerate_error("degenerate geometry: every sample triple is collinear");
    }

    RansacResult result;
    const auto n = samples.size();
    std::optional<AffineModel> best;
    std::size_t best_count = 0;
    for (int it = 0; it < cfg.iterations; ++it) {
        const auto i0 = rng.below(n);
        auto i1 = rng.below(n - 1);
        if (i1 >= i0) ++i1;
        auto i2 = rng.below(n - 2);
        if (i2 >= std::min(i0, i1)) ++i2;
        if (i2 >= std::max(i0, i1)) ++i2;
        const auto hyp = solve_affine_minimal(samples[i0], samples[i1], samples[i2]);
        if (!hyp) {
            ++result.degenerate_draws;
            continue;
        }
        std::size_t count = 0;
        for (const auto& s : samples) count += reprojection_error(*hyp, s) <= cfg.reproj_threshold;
        if (!best || count > best_count) {
            best = hyp;
            best_count = count;
        }
    }
    if (!best) {
        // Every draw was degenerate although a spanning triple exists; fall
        // back to the full set.
        best = fit_affine_weighted(samples);
    }

    std::vector<std::size_t> inliers;
    for (std::size_t i = 0; i < n; ++i) {
        if (reprojection_error(*best, samples[i]) <= cfg.reproj_threshold) inliers.push_back(i);
    }
    result.inliers = inliers.size();
    const auto consensus = pick(samples, inliers);
    result.first_pass = has_spanning_triple(consensus) ? fit_affine_weighted(consensus) : *best;

    // Second pass over the consensus set: drop the largest residuals.
    std::vector<double> err(consensus.size());
    for (std::size_t i = 0; i < consensus.size(); ++i) err[i] = reprojection_error(result.first_pass, consensus[i]);
    std::vector<std::size_t> order(consensus.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return err[a] < err[b]; });
    const auto discard = static_cast<std::size_t>(std::floor(cfg.second_pass_discard * static_cast<double>(order.size())));
    std::size_t keep = order.size() - discard;
    keep = std::min(order.size(), std::max<std::size_t>(keep, 3));
    order.resize(keep);
    std::sort(order.begin(), order.end());
    const auto kept = pick(consensus, order);
    result.kept = kept.size();
    result.model = has_spanning_triple(kept) ? fit_affine_weighted(kept) : result.first_pass;
    return result;
}

Grid<double> residual_flow(const FlowField& flow, const AffineModel& model) {
    Grid<double> r(flow.width(), flow.height(), 0.0);
    for (int y = 0; y < flow.height(); ++y) {
        for (int x = 0; x < flow.width(); ++x) {
            r(x, y) = std::hypot(flow.u(x, y) - model.predict_u(x, y), flow.v(x, y) - model.predict_v(x, y));
        }
    }
    return r;
}

Grid<double> confidence_gate(const Grid<float>& visibility, const Grid<float>& confidence, double vis_min,
                             double exponent) {
    if (!visibility.same_shape(confidence)) throw validation_error("visibility and confidence maps differ in shape");
    Grid<double> g(visibility.width(), visibility.height(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (visibility[i] >= vis_min) {
            const double c = std::clamp(static_cast<double>(confidence[i]), 0.0, 1.0);
            g[i] = std::pow(c, exponent);
        }
    }
    return g;
}

double median_of(std::span<const double> values) {
    if (values.empty()) throw empty_input_error("median of an empty set");
    std::vector<double> v(values.begin(), values.end());
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

MadThreshold mad_threshold(std::span<const double> values, double k_mad) {
    MadThreshold t;
    t.median = median_of(values);
    std::vector<double> dev(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) dev[i] = std::abs(values[i] - t.median);
    t.mad = median_of(dev);
    t.tau = t.median + k_mad * kMadConsistency * t.mad;
    return t;
}

BinaryMask object_motion_mask(const Grid<double>& residual, const Grid<double>& gate, double k_mad,
                              MadThreshold* threshold_out) {
    if (!residual.same_shape(gate)) throw validation_error("residual and gate maps differ in shape");
    Grid<double> gated(residual.width(), residual.height());
    for (std::size_t i = 0; i < gated.size(); ++i) gated[i] = residual[i] * gate[i];
    BinaryMask mask(residual.width(), residual.height(), 0);
    if (gated.empty()) return mask;
    const auto t = mad_threshold(gated.values(), k_mad);
    for (std::size_t i = 0; i < gated.size(); ++i) mask[i] = gated[i] > t.tau ? 1 : 0;
    if (threshold_out) *threshold_out = t;
    return mask;
}

Decomposition decompose_flow(std::span<const FlowField> frames, std::size_t reference,
                             const DecompositionConfig& cfg) {
    if (reference >= frames.size()) throw config_error("reference frame index out of range");
    for (const auto& f : frames) {
        if (f.width() != frames[reference].width() || f.height() != frames[reference].height()) {
            throw validation_error("all flow frames of a crop must share one size");
        }
    }
    Rng rng(cfg.ransac.seed);
    Decomposition d;
    const auto samples = collect_valid_flow(frames, cfg.ransac, rng);
    d.samples = samples.size();
    d.fit = fit_affine_ransac(samples, cfg.ransac, rng);

    const auto& ref = frames[reference];
    d.residual = residual_flow(ref, d.fit.model);
    const Grid<float> ones(ref.width(), ref.height(), 1.0f);
    d.gate = confidence_gate(ref.visibility ? *ref.visibility : ones, ref.confidence ? *ref.confidence : ones,
                             cfg.ransac.vis_min, cfg.gate_exponent);
    d.raw_mask = object_motion_mask(d.residual, d.gate, cfg.k_mad, &d.threshold);
    d.mask = mask_cleanup(d.raw_mask, cfg.cleanup);
    return d;
}

}  // namespace evkit
