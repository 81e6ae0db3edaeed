// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "evkit/flow.hpp"

namespace evkit {

// Dense float32 array with an explicit shape, stored on disk as raw
// little-endian float32 plus a JSON sidecar {"shape": [...]}.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t element_count() const;
};

Tensor read_tensor(const std::filesystem::path& raw_path, const std::filesystem::path& json_path);
void write_tensor(const std::filesystem::path& raw_path, const std::filesystem::path& json_path,
                  const Tensor& tensor);

struct LossConfig {
    std::size_t iterations = 4;  // K
    double gamma = 0.8;          // iteration decay
    double alpha = 1.0;          // trajectory weight
    double lambda = 0.01;        // flow weight
    double occluded_weight = 0.2;
    double visibility_cut = 0.5;
    double confidence_cut = 0.3;

    void validate() const;
};

struct Vec2 {
    double x = 0;
    double y = 0;
};

// alpha * sum_k gamma^(K-k) * mean_i w_i * (|dx_i| + |dy_i|), where w_i is 1
// for points with visibility >= cut and confidence >= cut, else
// occluded_weight. preds holds K iterations, each aligned with pseudo.
double track_loss(std::span<const std::vector<Vec2>> preds, std::span<const Vec2> pseudo,
                  std::span<const double> visibility, std::span<const double> confidence, const LossConfig& cfg);

// sum_k gamma^(K-k) * mean over pixels of |du| + |dv|.
double flow_loss(std::span<const FlowField> preds, const FlowField& pseudo, const LossConfig& cfg);

double total_loss(double track, double flow, double lambda);

// Position of cell (col, row) is (offset_x + stride * col, offset_y + stride * row).
struct GridGeometry {
    int width = 0;
    int height = 0;
    double stride = 1.0;
    double offset_x = 0.0;
    double offset_y = 0.0;
};

enum class SoftArgmaxMode {
    kNormalize,  // weights must be non-negative; divided by their sum
    kSoftmax,    // row holds logits
};

// Expected grid position under the normalized row (row-major over the grid).
// Throws for an all-zero row in normalize mode and for non-finite entries.
Vec2 soft_argmax(std::span<const double> row, const GridGeometry& grid,
                 SoftArgmaxMode mode = SoftArgmaxMode::kNormalize);

// Elementwise Huber summed over the two coordinates.
double huber(double e, double delta = 1.0);
double huber2(const Vec2& predicted, const Vec2& target, double delta = 1.0);

// Mean Huber over frames with visibility >= 0.5, excluding the query frame.
// Throws when no frame qualifies.
double attention_traj_loss(std::span<const Vec2> predicted, std::span<const Vec2> target,
                           std::span<const double> visibility, std::size_t query_frame, double huber_delta = 1.0);

// Average of the forward and backward losses.
double attention_traj_loss_bidirectional(double forward, double backward);

// H x W x C image, row-major, channels interleaved.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
};

Image image_from_tensor(const Tensor& t);
Tensor tensor_from_image(const Image& img);

// out(x) = bilinear sample of image at x + flow(x), with sample coordinates
// clamped to the frame (edge replication).
Image backward_warp(const Image& image, const FlowField& flow);

// (1 - t) * a + t * b.
Image blend_bidirectional(const Image& a, const Image& b, double t_norm);

}  // namespace evkit
