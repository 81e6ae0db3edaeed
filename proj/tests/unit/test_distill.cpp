// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "evkit/distill.hpp"
#include "evkit/error.hpp"
#include "oracles.hpp"

using namespace evkit;

namespace {

LossConfig config_k(std::size_t k, double gamma = 0.8) {
    LossConfig c;
    c.iterations = k;
    c.gamma = gamma;
    return c;
}

double naive_track(const std::vector<std::vector<Vec2>>& preds, const std::vector<Vec2>& pseudo,
                   const std::vector<double>& vis, const std::vector<double>& conf, const LossConfig& c) {
    const auto K = preds.size();
    double total = 0;
    for (std::size_t k = 1; k <= K; ++k) {
        double w = 1;
        for (std::size_t i = 0; i < K - k; ++i) w *= c.gamma;
        double s = 0;
        for (std::size_t i = 0; i < pseudo.size(); ++i) {
            const bool visible = vis[i] >= 0.5 && conf[i] >= c.confidence_cut;
            const double ind = (visible ? 0.0 : 1.0) / 5.0 + (visible ? 1.0 : 0.0);
            s += ind * (std::fabs(preds[k - 1][i].x - pseudo[i].x) + std::fabs(preds[k - 1][i].y - pseudo[i].y));
        }
        total += w * s / static_cast<double>(pseudo.size());
    }
    return c.alpha * total;
}

double naive_flow(const std::vector<FlowField>& preds, const FlowField& pseudo, const LossConfig& c) {
    const auto K = preds.size();
    double total = 0;
    for (std::size_t k = 1; k <= K; ++k) {
        double w = 1;
        for (std::size_t i = 0; i < K - k; ++i) w *= c.gamma;
        double s = 0;
        for (int y = 0; y < pseudo.height(); ++y)
            for (int x = 0; x < pseudo.width(); ++x) {
                s += std::fabs(static_cast<double>(preds[k - 1].u(x, y)) - pseudo.u(x, y));
                s += std::fabs(static_cast<double>(preds[k - 1].v(x, y)) - pseudo.v(x, y));
            }
        total += w * s / (pseudo.width() * pseudo.height());
    }
    return total;
}

double naive_huber_loss(const std::vector<Vec2>& p, const std::vector<Vec2>& g, const std::vector<double>& v,
                        std::size_t qf) {
    double s = 0;
    int n = 0;
    for (std::size_t t = 0; t < p.size(); ++t) {
        if (t == qf || v[t] < 0.5) continue;
        for (double e : {p[t].x - g[t].x, p[t].y - g[t].y}) {
            s += std::fabs(e) <= 1.0 ? 0.5 * e * e : std::fabs(e) - 0.5;
        }
        ++n;
    }
    return s / n;
}

}  // namespace

TEST_CASE("single visible point") {
    const std::vector<std::vector<Vec2>> preds{{{1.0, 0.0}}};
    const std::vector<Vec2> pseudo{{0.0, 0.0}};
    const std::vector<double> vis{1.0};
    const std::vector<double> conf{1.0};
    CHECK(track_loss(preds, pseudo, vis, conf, config_k(1)) == 1.0);
    const std::vector<double> occ{0.0};
    CHECK(track_loss(preds, pseudo, occ, conf, config_k(1)) == doctest::Approx(0.2).epsilon(1e-15));
    const std::vector<double> low_conf{0.1};
    CHECK(track_loss(preds, pseudo, vis, low_conf, config_k(1)) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("iteration weights are geometric") {
    const std::vector<std::vector<Vec2>> preds{{{2.0, 0.0}}, {{2.0, 0.0}}};
    const std::vector<Vec2> pseudo{{0.0, 0.0}};
    const std::vector<double> one{1.0};
    CHECK(track_loss(preds, pseudo, one, one, config_k(2, 0.5)) == 2.0 * 1.5);
    CHECK_THROWS_AS(track_loss(preds, pseudo, one, one, config_k(3)), Error);
}

TEST_CASE("track loss is linear in alpha") {
    const std::vector<std::vector<Vec2>> preds{{{1.5, -2.0}, {0.0, 0.25}}};
    const std::vector<Vec2> pseudo{{0.0, 0.0}, {1.0, 1.0}};
    const std::vector<double> v{1.0, 0.2};
    auto c = config_k(1);
    const double l1 = track_loss(preds, pseudo, v, v, c);
    c.alpha = 2.0;
    CHECK(track_loss(preds, pseudo, v, v, c) == 2.0 * l1);
}

TEST_CASE("losses match naive-loop oracles") {
    std::mt19937_64 gen(10);
    std::normal_distribution<double> n(0.0, 3.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t K = 1 + trial % 4;
        const std::size_t P = 1 + static_cast<std::size_t>(u(gen) * 64);
        std::vector<std::vector<Vec2>> preds(K, std::vector<Vec2>(P));
        std::vector<Vec2> pseudo(P);
        std::vector<double> vis(P), conf(P);
        for (std::size_t i = 0; i < P; ++i) {
            pseudo[i] = {n(gen), n(gen)};
            vis[i] = u(gen);
            conf[i] = u(gen);
            for (auto& p : preds) p[i] = {n(gen), n(gen)};
        }
        const auto c = config_k(K, 0.5 + 0.5 * u(gen));
        CHECK(std::fabs(track_loss(preds, pseudo, vis, conf, c) - naive_track(preds, pseudo, vis, conf, c)) < 1e-10);

        const int W = 1 + trial % 8;
        const int H = 1 + (trial / 8) % 8;
        FlowField target(W, H);
        std::vector<FlowField> fp(K, FlowField(W, H));
        for (std::size_t i = 0; i < target.u.size(); ++i) {
            target.u[i] = static_cast<float>(n(gen));
            target.v[i] = static_cast<float>(n(gen));
            for (auto& f : fp) {
                f.u[i] = static_cast<float>(n(gen));
                f.v[i] = static_cast<float>(n(gen));
            }
        }
        CHECK(std::fabs(flow_loss(fp, target, c) - naive_flow(fp, target, c)) < 1e-10);

        std::vector<Vec2> ap(P), at(P);
        std::vector<double> av(P);
        for (std::size_t t = 0; t < P; ++t) {
            ap[t] = {n(gen), n(gen)};
            at[t] = {n(gen), n(gen)};
            av[t] = t == 1 ? 1.0 : u(gen);
        }
        if (P > 1) {
            CHECK(std::fabs(attention_traj_loss(ap, at, av, 0) - naive_huber_loss(ap, at, av, 0)) < 1e-10);
        }
    }
}

TEST_CASE("flow loss examples") {
    FlowField t(3, 2);
    std::vector<FlowField> exact(1, t);
    CHECK(flow_loss(exact, t, config_k(1)) == 0.0);
    std::vector<FlowField> off(1, t);
    for (std::size_t i = 0; i < t.u.size(); ++i) {
        off[0].u[i] = 1.0f;
        off[0].v[i] = 1.0f;
    }
    CHECK(flow_loss(off, t, config_k(1)) == 2.0);
    std::vector<FlowField> two(2, off[0]);
    CHECK(flow_loss(two, t, config_k(2, 0.8)) == doctest::Approx(2.0 * 1.8));
}

TEST_CASE("total loss") {
    CHECK(total_loss(1.0, 0.0, 0.01) == 1.0);
    CHECK(total_loss(0.0, 2.0, 0.01) == 0.02);
    CHECK(total_loss(3.0, 7.0, 0.0) == 3.0);
    CHECK(total_loss(1.0, 2.0, 0.02) - 1.0 == doctest::Approx(2.0 * (total_loss(1.0, 2.0, 0.01) - 1.0)));
    CHECK(LossConfig{}.lambda == 0.01);
}

TEST_CASE("NaN input is a numeric error") {
    const std::vector<std::vector<Vec2>> preds{{{std::nan(""), 0.0}}};
    const std::vector<Vec2> pseudo{{0.0, 0.0}};
    const std::vector<double> one{1.0};
    try {
        track_loss(preds, pseudo, one, one, config_k(1));
        FAIL("expected a numeric error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kNumeric);
    }
    FlowField t(2, 2);
    std::vector<FlowField> p(1, t);
    p[0].u[3] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(flow_loss(p, t, config_k(1)), Error);
}

TEST_CASE("soft argmax") {
    const GridGeometry g{10, 10};
    std::vector<double> row(100, 0.0);
    row[7 * 10 + 5] = 1.0;
    auto p = soft_argmax(row, g);
    CHECK(p.x == 5.0);
    CHECK(p.y == 7.0);

    std::vector<double> two(9, 0.0);
    two[0] = 0.5;
    two[2] = 0.5;
    p = soft_argmax(two, {3, 3});
    CHECK(p.x == 1.0);
    CHECK(p.y == 0.0);

    p = soft_argmax(std::vector<double>(12, 1.0), {4, 3, 8.0, 4.0, 4.0});
    CHECK(p.x == doctest::Approx(4.0 + 8.0 * 1.5));
    CHECK(p.y == doctest::Approx(4.0 + 8.0 * 1.0));

    CHECK_THROWS_AS(soft_argmax(std::vector<double>(9, 0.0), {3, 3}), Error);
    CHECK_THROWS_AS(soft_argmax(std::vector<double>(8, 1.0), {3, 3}), Error);
}

TEST_CASE("soft argmax stays in the grid hull") {
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> logit(0.0, 4.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> row(6 * 5);
        for (auto& v : row) v = u(gen);
        auto p = soft_argmax(row, {6, 5});
        CHECK((p.x >= 0.0 && p.x <= 5.0 && p.y >= 0.0 && p.y <= 4.0));
        for (auto& v : row) v = logit(gen);
        p = soft_argmax(row, {6, 5}, SoftArgmaxMode::kSoftmax);
        CHECK((p.x >= 0.0 && p.x <= 5.0 && p.y >= 0.0 && p.y <= 4.0));
    }
}

TEST_CASE("Huber attention loss examples") {
    const std::vector<Vec2> tgt{{0, 0}, {0, 0}};
    const std::vector<double> vis{1.0, 1.0};
    CHECK(attention_traj_loss(tgt, tgt, vis, 0) == 0.0);
    const std::vector<Vec2> half{{0, 0}, {0.5, 0}};
    CHECK(attention_traj_loss(half, tgt, vis, 0) == 0.125);
    const std::vector<Vec2> three{{0, 0}, {3.0, 0}};
    CHECK(attention_traj_loss(three, tgt, vis, 0) == 2.5);
    CHECK(attention_traj_loss_bidirectional(2.5, 0.125) == (2.5 + 0.125) / 2);
    const std::vector<double> hidden{1.0, 0.2};
    CHECK_THROWS_AS(attention_traj_loss(three, tgt, hidden, 0), Error);
}

TEST_CASE("Huber slope is continuous at the junction") {
    const double h = 1e-7;
    const double left = (huber(1.0) - huber(1.0 - h)) / h;
    const double right = (huber(1.0 + h) - huber(1.0)) / h;
    CHECK(std::fabs(left - right) < 1e-6);
    CHECK(std::fabs(left - 1.0) < 1e-6);
}

TEST_CASE("zero-flow warp is the exact identity") {
    std::mt19937_64 gen(2);
    std::normal_distribution<float> n(0.0f, 100.0f);
    Image img{7, 5, 3, std::vector<float>(7 * 5 * 3)};
    for (auto& v : img.data) v = n(gen);
    const auto out = backward_warp(img, FlowField(7, 5));
    CHECK(out.data == img.data);
}

TEST_CASE("integer shift replicates the edge") {
    Image img{4, 1, 1, {1, 2, 3, 4}};
    FlowField f(4, 1);
    for (auto& v : f.u.storage()) v = 1.0f;
    CHECK(backward_warp(img, f).data == std::vector<float>{2, 3, 4, 4});
}

TEST_CASE("half-pixel shift on a ramp is exact") {
    Image img{8, 2, 1, std::vector<float>(16)};
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 8; ++x) img.at(x, y, 0) = 3.0f * x;
    FlowField f(8, 2);
    for (auto& v : f.u.storage()) v = 0.5f;
    const auto out = backward_warp(img, f);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 7; ++x) CHECK(std::fabs(out.at(x, y, 0) - 3.0f * (x + 0.5f)) < 1e-6);
}

TEST_CASE("blend boundaries and midpoint") {
    std::mt19937_64 gen(3);
    std::normal_distribution<float> n(0.0f, 10.0f);
    Image a{3, 2, 2, std::vector<float>(12)};
    Image b = a;
    for (auto& v : a.data) v = n(gen);
    for (auto& v : b.data) v = n(gen);
    CHECK(blend_bidirectional(a, b, 0.0).data == a.data);
    CHECK(blend_bidirectional(a, b, 1.0).data == b.data);
    const auto mid = blend_bidirectional(a, b, 0.5);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        CHECK(mid.data[i] == doctest::Approx((a.data[i] + b.data[i]) / 2.0));
    }
    Image c{2, 2, 2, std::vector<float>(8)};
    CHECK_THROWS_AS(blend_bidirectional(a, c, 0.5), Error);
}

TEST_CASE("tensor files round trip") {
    const auto dir = oracle::temp_dir("tensor");
    Tensor t{{2, 3, 2}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12.5f}};
    write_tensor(dir / "t.bin", dir / "t.json", t);
    const auto back = read_tensor(dir / "t.bin", dir / "t.json");
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);
    const auto img = image_from_tensor(back);
    CHECK(img.height == 2);
    CHECK(img.width == 3);
    CHECK(img.channels == 2);
}
