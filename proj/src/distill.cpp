// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "evkit/distill.hpp"

#include <algorithm>
#include <cmath>

#include "evkit/error.hpp"
#include "io_util.hpp"

namespace evkit {

namespace {

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw numeric_error(std::string("non-finite value in ") + what);
}

// gamma^(K-k) for k = 1..K
std::vector<double> iteration_weights(std::size_t K, double gamma) {
    std::vector<double> w(K);
    for (std::size_t k = 1; k <= K; ++k) w[k - 1] = std::pow(gamma, static_cast<double>(K - k));
    return w;
}

}  // namespace

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor read_tensor(const std::filesystem::path& raw_path, const std::filesystem::path& json_path) {
    const auto meta = detail::read_json(json_path);
    Tensor t;
    try {
        t.shape = meta.at("shape").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(json_path.string() + ": expected {\"shape\": [...]}: " + e.what());
    }
    t.data = detail::decode_f32(detail::read_file_bytes(raw_path), raw_path.string());
    if (t.data.size() != t.element_count()) {
        throw validation_error(raw_path.string() + ": holds " + std::to_string(t.data.size()) +
                               " floats, shape implies " + std::to_string(t.element_count()));
    }
    return t;
}

void write_tensor(const std::filesystem::path& raw_path, const std::filesystem::path& json_path,
                  const Tensor& tensor) {
    if (tensor.data.size() != tensor.element_count()) throw validation_error("tensor data does not match its shape");
    detail::write_file_bytes(raw_path, detail::encode_f32(tensor.data));
    detail::write_json(json_path, nlohmann::json{{"shape", tensor.shape}});
}

void LossConfig::validate() const {
    if (iterations < 1) throw config_error("K must be >= 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw config_error("gamma must lie in (0, 1]");
    if (!(lambda >= 0.0)) throw config_error("lambda must be >= 0");
    if (!(alpha >= 0.0)) throw config_error("alpha must be >= 0");
    if (!(occluded_weight >= 0.0)) throw config_error("occluded weight must be >= 0");
}

double track_loss(std::span<const std::vector<Vec2>> preds, std::span<const Vec2> pseudo,
                  std::span<const double> visibility, std::span<const double> confidence, const LossConfig& cfg) {
    cfg.validate();
    if (preds.size() != cfg.iterations) {
        throw validation_error("got " + std::to_string(preds.size()) + " prediction iterations, K is " +
                               std::to_string(cfg.iterations));
    }
    const auto n = pseudo.size();
    if (n == 0) throw empty_input_error("track_loss needs at least one point");
    if (visibility.size() != n || confidence.size() != n) {
        throw validation_error("visibility/confidence do not align with the pseudo-labels");
    }
    std::vector<double> weight(n);
    for (std::size_t i = 0; i < n; ++i) {
        require_finite(pseudo[i].x, "pseudo-labels");
        require_finite(pseudo[i].y, "pseudo-labels");
        require_finite(visibility[i], "visibility");
        require_finite(confidence[i], "confidence");
        const bool vis = visibility[i] >= cfg.visibility_cut && confidence[i] >= cfg.confidence_cut;
        weight[i] = vis ? 1.0 : cfg.occluded_weight;
    }
    const auto gk = iteration_weights(preds.size(), cfg.gamma);
    double total = 0;
    for (std::size_t k = 0; k < preds.size(); ++k) {
        if (preds[k].size() != n) throw validation_error("prediction iteration " + std::to_string(k) + " is misaligned");
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& p = preds[k][i];
            require_finite(p.x, "predictions");
            require_finite(p.y, "predictions");
            sum += weight[i] * (std::abs(p.x - pseudo[i].x) + std::abs(p.y - pseudo[i].y));
        }
        total += gk[k] * (sum / static_cast<double>(n));
    }
    return cfg.alpha * total;
}

double flow_loss(std::span<const FlowField> preds, const FlowField& pseudo, const LossConfig& cfg) {
    cfg.validate();
    if (preds.size() != cfg.iterations) {
        throw validation_error("got " + std::to_string(preds.size()) + " flow iterations, K is " +
                               std::to_string(cfg.iterations));
    }
    const auto n = pseudo.u.size();
    if (n == 0) throw empty_input_error("flow_loss needs a non-empty field");
    for (std::size_t i = 0; i < n; ++i) {
        require_finite(pseudo.u[i], "pseudo flow");
        require_finite(pseudo.v[i], "pseudo flow");
    }
    const auto gk = iteration_weights(preds.size(), cfg.gamma);
    double total = 0;
    for (std::size_t k = 0; k < preds.size(); ++k) {
        const auto& f = preds[k];
        if (!f.u.same_shape(pseudo.u) || !f.v.same_shape(pseudo.u)) {
            throw validation_error("flow iteration " + std::to_string(k) + " differs in shape from the pseudo-label");
        }
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            require_finite(f.u[i], "predicted flow");
            require_finite(f.v[i], "predicted flow");
            sum += std::abs(static_cast<double>(f.u[i]) - pseudo.u[i]) +
                   std::abs(static_cast<double>(f.v[i]) - pseudo.v[i]);
        }
        total += gk[k] * (sum / static_cast<double>(n));
    }
    return total;
}

double total_loss(double track, double flow, double lambda) {
    require_finite(track, "track loss");
    require_finite(flow, "flow loss");
    require_finite(lambda, "lambda");
    return track + lambda * flow;
}

Vec2 soft_argmax(std::span<const double> row, const GridGeometry& grid, SoftArgmaxMode mode) {
    const auto n = static_cast<std::size_t>(grid.width) * static_cast<std::size_t>(grid.height);
    if (grid.width <= 0 || grid.height <= 0) throw config_error("soft-argmax grid must be non-empty");
    if (row.size() != n) {
        throw validation_error("attention row has " + std::to_string(row.size()) + " entries, grid has " +
                               std::to_string(n));
    }
    std::vector<double> w(row.begin(), row.end());
    for (double v : w) require_finite(v, "attention row");
    if (mode == SoftArgmaxMode::kSoftmax) {
        const double top = *std::max_element(w.begin(), w.end());
        for (auto& v : w) v = std::exp(v - top);
    } else {
        for (double v : w) {
            if (v < 0) throw validation_error("attention weights must be non-negative in normalize mode");
        }
    }
    double sum = 0;
    for (double v : w) sum += v;
    if (!(sum > 0)) throw numeric_error("attention row has no positive weight");
    double ex = 0;
    double ey = 0;
    for (int r = 0; r < grid.height; ++r) {
        for (int c = 0; c < grid.width; ++c) {
            const double p = w[static_cast<std::size_t>(r) * grid.width + c] / sum;
            ex += p * (grid.offset_x + grid.stride * c);
            ey += p * (grid.offset_y + grid.stride * r);
        }
    }
    return {ex, ey};
}

double huber(double e, double delta) {
    const double a = std::abs(e);
    return a <= delta ? 0.5 * a * a : delta * (a - 0.5 * delta);
}

double huber2(const Vec2& predicted, const Vec2& target, double delta) {
    return huber(predicted.x - target.x, delta) + huber(predicted.y - target.y, delta);
}

double attention_traj_loss(std::span<const Vec2> predicted, std::span<const Vec2> target,
                           std::span<const double> visibility, std::size_t query_frame, double huber_delta) {
    if (!(huber_delta > 0)) throw config_error("Huber delta must be positive");
    if (predicted.size() != target.size() || visibility.size() != target.size()) {
        throw validation_error("predicted positions, targets and visibility differ in length");
    }
    double sum = 0;
    std::size_t used = 0;
    for (std::size_t t = 0; t < target.size(); ++t) {
        require_finite(visibility[t], "visibility");
        if (t == query_frame || visibility[t] < 0.5) continue;
        require_finite(predicted[t].x, "predicted positions");
        require_finite(predicted[t].y, "predicted positions");
        require_finite(target[t].x, "target positions");
        require_finite(target[t].y, "target positions");
        sum += huber2(predicted[t], target[t], huber_delta);
        ++used;
    }
    if (used == 0) throw empty_input_error("no visible frame besides the query frame");
    return sum / static_cast<double>(used);
}

double attention_traj_loss_bidirectional(double forward, double backward) { return 0.5 * (forward + backward); }

Image image_from_tensor(const Tensor& t) {
    if (t.shape.size() != 3 && t.shape.size() != 2) throw validation_error("image tensor must be H x W or H x W x C");
    Image img;
    img.height = static_cast<int>(t.shape[0]);
    img.width = static_cast<int>(t.shape[1]);
    img.channels = t.shape.size() == 3 ? static_cast<int>(t.shape[2]) : 1;
    img.data = t.data;
    return img;
}

Tensor tensor_from_image(const Image& img) {
    return {{static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width),
             static_cast<std::size_t>(img.channels)},
            img.data};
}

Image backward_warp(const Image& image, const FlowField& flow) {
    if (flow.width() != image.width || flow.height() != image.height) {
        throw validation_error("flow size does not match the image size");
    }
    if (image.width == 0 || image.height == 0) return image;
    Image out = image;
    const double max_x = image.width - 1;
    const double max_y = image.height - 1;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const double sx = std::clamp(x + static_cast<double>(flow.u(x, y)), 0.0, max_x);
            const double sy = std::clamp(y + static_cast<double>(flow.v(x, y)), 0.0, max_y);
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const int x1 = std::min(x0 + 1, image.width - 1);
            const int y1 = std::min(y0 + 1, image.height - 1);
            const double fx = sx - x0;
            const double fy = sy - y0;
            for (int c = 0; c < image.channels; ++c) {
                const double top = (1.0 - fx) * image.at(x0, y0, c) + fx * image.at(x1, y0, c);
                const double bottom = (1.0 - fx) * image.at(x0, y1, c) + fx * image.at(x1, y1, c);
                out.at(x, y, c) = static_cast<float>((1.0 - fy) * top + fy * bottom);
            }
        }
    }
    return out;
}

Image blend_bidirectional(const Image& a, const Image& b, double t_norm) {
    if (!a.same_shape(b)) throw validation_error("blend inputs differ in shape");
    if (!(t_norm >= 0.0 && t_norm <= 1.0)) throw config_error("t_norm must lie in [0, 1]");
    Image out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = static_cast<float>((1.0 - t_norm) * a.data[i] + t_norm * static_cast<double>(b.data[i]));
    }
    return out;
}

}  // namespace evkit
