// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <random>

#include "evkit/error.hpp"
#include "evkit/evstream.hpp"
#include "oracles.hpp"

using namespace evkit;

namespace {

EventStream small_stream() {
    EventStream s{10, 10, {}};
    for (int i = 1; i <= 5; ++i) s.events.push_back({1, 1, i, 1});
    return s;
}

}  // namespace

TEST_CASE("TETOEVT1 with zero events parses to an empty stream") {
    EventStream s{640, 480, {}};
    const auto bytes = encode_tetoevt1(s);
    CHECK(bytes.size() == 24);
    const auto back = parse_tetoevt1(bytes);
    CHECK(back.width == 640);
    CHECK(back.height == 480);
    CHECK(back.empty());
}

TEST_CASE("CSV events parse and sort by time") {
    const auto s = parse_events_csv("x,y,t_us,p\n3,4,105,-1\n3,4,100,1\n", {10, 10});
    REQUIRE(s.size() == 2);
    CHECK(s.events[0].t == 100);
    CHECK(s.events[0].p == 1);
    CHECK(s.events[1].t == 105);
    CHECK(s.events[1].p == -1);
}

TEST_CASE("out-of-bounds event names the first offender") {
    EventStream s{10, 10, {{12, 0, 5, 1}, {13, 0, 6, 1}}};
    const auto bytes = encode_tetoevt1(s);
    try {
        parse_tetoevt1(bytes);
        FAIL("expected a validation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kValidation);
        CHECK(std::string(e.what()).rfind("event 0 ", 0) == 0);
    }
}

TEST_CASE("malformed TETOEVT1 reports byte offsets") {
    auto bytes = encode_tetoevt1(small_stream());
    SUBCASE("bad magic") {
        bytes[0] = 'X';
        CHECK_THROWS_AS(parse_tetoevt1(bytes), ParseError);
    }
    SUBCASE("truncated record") {
        bytes.pop_back();
        try {
            parse_tetoevt1(bytes);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.byte_offset() >= 24);
        }
    }
    SUBCASE("zero polarity") {
        bytes[24 + 12] = 0;
        try {
            parse_tetoevt1(bytes);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK((e.kind() == ErrorKind::kParse || e.kind() == ErrorKind::kValidation));
        }
    }
}

TEST_CASE("malformed CSV reports a parse error") {
    CHECK_THROWS_AS(parse_events_csv("x,y,t_us,p\n1,2,abc,1\n", {10, 10}), ParseError);
    CHECK_THROWS_AS(parse_events_csv("a,b,c\n", {10, 10}), ParseError);
}

TEST_CASE("CSV load requires a sensor size") {
    const auto dir = oracle::temp_dir("csv_sensor");
    std::ofstream(dir / "ev.csv") << "x,y,t_us,p\n1,1,0,1\n";
    try {
        load_events(dir / "ev.csv", EventFormat::kCsv);
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kConfig);
    }
    CHECK(load_events(dir / "ev.csv", EventFormat::kCsv, SensorSize{4, 4}).size() == 1);
}

TEST_CASE("missing file raises an io error naming the path") {
    try {
        load_events("/nonexistent/evkit/events.bin", EventFormat::kTetoEvt1);
        FAIL("expected an io error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kIo);
        CHECK(std::string(e.what()).find("/nonexistent/evkit/events.bin") != std::string::npos);
    }
}

TEST_CASE("round trip preserves order among equal timestamps") {
    EventStream s{8, 8, {{1, 1, 5, 1}, {2, 2, 5, -1}, {3, 3, 5, 1}, {0, 0, 7, -1}}};
    const auto back = parse_tetoevt1(encode_tetoevt1(s));
    CHECK(back.events == s.events);
    const auto csv_back = parse_events_csv(encode_events_csv(s), {8, 8});
    CHECK(csv_back.events == s.events);
}

TEST_CASE("out-of-order input is stably sorted") {
    std::vector<Event> ev{{0, 0, 9, 1}, {1, 0, 3, 1}, {2, 0, 9, -1}, {3, 0, 3, -1}};
    sort_by_time(ev);
    CHECK(ev[0].x == 1);
    CHECK(ev[1].x == 3);
    CHECK(ev[2].x == 0);
    CHECK(ev[3].x == 2);
}

TEST_CASE("bin quotas follow floor(N / 2^(B-b))") {
    StackConfig cfg{8, 3};
    CHECK(bin_quota(cfg, 1) == 2);
    CHECK(bin_quota(cfg, 2) == 4);
    CHECK(bin_quota(cfg, 3) == 8);
    StackConfig defaults{};
    CHECK(defaults.total_events == 300000);
    CHECK(defaults.bins == 10);
    CHECK(bin_quota(defaults, 1) == 585);
    CHECK(bin_quota(defaults, 10) == 300000);
}

TEST_CASE("quota floor is one event") {
    StackConfig cfg{3, 5};
    CHECK(bin_quota(cfg, 1) == 1);
    CHECK(bin_quota(cfg, 5) == 3);
    CHECK_FALSE(cfg.validate().empty());
    CHECK(StackConfig{300000, 10}.validate().empty());
}

TEST_CASE("invalid stack config is rejected") {
    CHECK_THROWS_AS(StackConfig({8, 0}).validate(), Error);
    CHECK_THROWS_AS(StackConfig({0, 3}).validate(), Error);
}

TEST_CASE("stack counts clamp to available events") {
    EventStream s{4, 4, {{0, 0, 1, 1}, {1, 0, 2, 1}, {2, 0, 3, -1}}};
    const auto st = build_event_stack(s, 10, {8, 3});
    CHECK(st.counts == std::vector<std::int64_t>{2, 3, 3});
    CHECK(st.at(2, 0, 0) == -1);
    CHECK(st.at(1, 0, 0) == 1);
    CHECK(st.at(0, 0, 0) == 0);
    CHECK(st.at(0, 0, 2) == 1);
}

TEST_CASE("empty window yields an all-zero stack") {
    const auto st = build_event_stack(small_stream(), 0, {8, 3});
    CHECK(st.counts == std::vector<std::int64_t>{0, 0, 0});
    CHECK(std::all_of(st.data.begin(), st.data.end(), [](auto v) { return v == 0; }));
}

TEST_CASE("stack matches the naive re-scan oracle") {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 40; ++trial) {
        const auto n = std::uniform_int_distribution<std::size_t>(0, 3000)(gen);
        const auto s = oracle::random_stream(gen, n, 16, 12, 5000);
        const auto N = std::uniform_int_distribution<std::int64_t>(1, 4000)(gen);
        const int B = std::uniform_int_distribution<int>(1, 12)(gen);
        const auto t = std::uniform_int_distribution<std::int64_t>(-10, 5100)(gen);
        std::vector<std::int64_t> counts;
        const auto expect = oracle::naive_stack(s, t, N, B, counts);
        const auto st = build_event_stack(s, t, {N, B});
        CHECK(st.data == expect);
        CHECK(st.counts == counts);
    }
}

TEST_CASE("accumulate_polarity") {
    CHECK(accumulate_polarity({}, 5, 5) == Grid<std::int32_t>(5, 5, 0));
    std::vector<Event> two{{3, 4, 0, 1}, {3, 4, 1, 1}};
    CHECK(accumulate_polarity(two, 5, 5)(3, 4) == 2);
    std::vector<Event> cancel{{3, 4, 0, 1}, {3, 4, 1, -1}};
    CHECK(accumulate_polarity(cancel, 5, 5)(3, 4) == 0);
}

TEST_CASE("accumulation is additive over disjoint sets") {
    std::mt19937_64 gen(3);
    const auto s = oracle::random_stream(gen, 500, 9, 7, 100);
    const std::span<const Event> all(s.events);
    const auto a = accumulate_polarity(all.first(200), 9, 7);
    const auto b = accumulate_polarity(all.subspan(200), 9, 7);
    const auto ab = accumulate_polarity(all, 9, 7);
    for (std::size_t i = 0; i < ab.size(); ++i) CHECK(ab[i] == a[i] + b[i]);
}

TEST_CASE("event density top-k") {
    SUBCASE("uniform events pick the first cells in row-major order") {
        std::vector<Event> ev;
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 4; ++x) ev.push_back({static_cast<std::uint16_t>(x * 2), static_cast<std::uint16_t>(y * 2), 0, 1});
        }
        const auto top = event_density_topk(ev, 8, 8, 2, 3);
        REQUIRE(top.size() == 3);
        CHECK(top[0] == PatchCount{0, 0, 1});
        CHECK(top[1] == PatchCount{0, 1, 1});
        CHECK(top[2] == PatchCount{0, 2, 1});
    }
    SUBCASE("concentrated events give one entry") {
        std::vector<Event> ev(10, Event{70, 5, 0, 1});
        const auto top = event_density_topk(ev, 256, 128);
        REQUIRE(top.size() == 1);
        CHECK(top[0] == PatchCount{0, 1, 10});
    }
    SUBCASE("ordering by count") {
        std::vector<Event> ev;
        for (int i = 0; i < 3; ++i) ev.push_back({1, 1, 0, 1});
        for (int i = 0; i < 5; ++i) ev.push_back({100, 1, 0, 1});
        const auto top = event_density_topk(ev, 128, 64, 64, 2);
        REQUIRE(top.size() == 2);
        CHECK(top[0] == PatchCount{0, 1, 5});
        CHECK(top[1] == PatchCount{0, 0, 3});
    }
}

TEST_CASE("window_by_count") {
    const auto s = small_stream();
    CHECK(window_by_count(s, 3, 0, WindowSide::kBefore).empty());
    const auto before = window_by_count(s, 3, 2, WindowSide::kBefore);
    REQUIRE(before.size() == 2);
    CHECK(before[0].t == 2);
    CHECK(before[1].t == 3);
    CHECK(window_by_count(s, 99, 5, WindowSide::kAfter).empty());
    const auto after = window_by_count(s, 3, 10, WindowSide::kAfter);
    REQUIRE(after.size() == 2);
    CHECK(after[0].t == 4);
}

TEST_CASE("before and after windows partition the stream") {
    std::mt19937_64 gen(5);
    const auto s = oracle::random_stream(gen, 400, 4, 4, 50);
    for (std::int64_t t = -1; t <= 51; ++t) {
        const auto b = window_by_count(s, t, 1000, WindowSide::kBefore);
        const auto a = window_by_count(s, t, 1000, WindowSide::kAfter);
        CHECK(b.size() + a.size() == s.size());
        for (const auto& e : b) CHECK(e.t <= t);
        for (const auto& e : a) CHECK(e.t > t);
    }
}

TEST_CASE("window_by_time is inclusive") {
    const auto s = small_stream();
    const auto w = window_by_time(s, 2, 4);
    REQUIRE(w.size() == 3);
    CHECK(w.front().t == 2);
    CHECK(w.back().t == 4);
}
