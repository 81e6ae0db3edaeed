// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "evkit/error.hpp"
#include "evkit/mask.hpp"
#include "oracles.hpp"

using namespace evkit;

TEST_CASE("3x3 ellipse is the plus-shaped cross") {
    const auto k = elliptical_kernel(3);
    CHECK(k.size() == 5);
    CHECK(elliptical_kernel(7).size() == 29);
    CHECK_THROWS_AS(elliptical_kernel(4), Error);
}

TEST_CASE("morphology matches the brute-force oracle") {
    std::mt19937_64 gen(31);
    for (int trial = 0; trial < 60; ++trial) {
        const int w = std::uniform_int_distribution<int>(1, 64)(gen);
        const int h = std::uniform_int_distribution<int>(1, 64)(gen);
        const auto m = oracle::random_mask(gen, w, h, 0.5);
        for (int k : {3, 7}) {
            const auto kern = elliptical_kernel(k);
            CHECK(dilate(m, kern) == oracle::naive_morph(m, k, true));
            CHECK(erode(m, kern) == oracle::naive_morph(m, k, false));
            CHECK(opening(m, kern) == oracle::naive_open(m, k));
            CHECK(closing(m, kern) == oracle::naive_close(m, k));
        }
    }
}

TEST_CASE("closing is the dual of opening") {
    std::mt19937_64 gen(32);
    for (int trial = 0; trial < 60; ++trial) {
        const auto m = oracle::random_mask(gen, 48, 40, 0.4);
        for (int k : {3, 5, 7}) {
            const auto kern = elliptical_kernel(k);
            CHECK(closing(m, kern) == complement(opening(complement(m), kern)));
        }
    }
}

TEST_CASE("cleanup of an empty mask stays empty") {
    CHECK(count_set(mask_cleanup(BinaryMask(30, 30, 0))) == 0);
}

TEST_CASE("isolated pixel is removed") {
    BinaryMask m(30, 30, 0);
    m(15, 15) = 1;
    CHECK(count_set(opening(m, elliptical_kernel(3))) == 0);
    CHECK(count_set(mask_cleanup(m)) == 0);
}

TEST_CASE("solid 20x20 square survives cleanup") {
    BinaryMask m(60, 60, 0);
    for (int y = 20; y < 40; ++y)
        for (int x = 20; x < 40; ++x) m(x, y) = 1;
    const auto out = mask_cleanup(m);
    const auto expect = oracle::naive_close(oracle::naive_open(m, 3), 7);
    CHECK(out == expect);
    // The cross-shaped opening clips the four corner pixels.
    CHECK(count_set(out) == 396);
    for (int y = 21; y < 39; ++y)
        for (int x = 21; x < 39; ++x) CHECK(out(x, y) == 1);
}

TEST_CASE("8-connected labelling") {
    BinaryMask m(5, 5, 0);
    m(0, 0) = 1;
    m(1, 1) = 1;
    m(4, 4) = 1;
    const auto c = label_components(m);
    REQUIRE(c.areas.size() == 2);
    CHECK(c.areas[0] == 2);
    CHECK(c.areas[1] == 1);
    CHECK(c.labels(1, 1) == 1);
    CHECK(c.labels(4, 4) == 2);
    CHECK(count_set(remove_small_components(m, 2)) == 2);
}

TEST_CASE("PGM round trip") {
    std::mt19937_64 gen(6);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = oracle::random_mask(gen, 1 + trial * 3, 2 + trial, 0.3);
        const auto bytes = encode_pgm(m);
        const auto back = parse_pgm(bytes);
        CHECK(back == m);
        CHECK(encode_pgm(back) == bytes);
    }
}

TEST_CASE("PGM comments and bad headers") {
    const std::string text = "P5\n# made by hand\n2 1\n255\n";
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    bytes.push_back(0);
    bytes.push_back(7);
    const auto m = parse_pgm(bytes);
    CHECK(m(0, 0) == 0);
    CHECK(m(1, 0) == 1);

    const std::string p2 = "P2\n1 1\n255\n0\n";
    CHECK_THROWS_AS(parse_pgm({reinterpret_cast<const std::uint8_t*>(p2.data()), p2.size()}), ParseError);
    bytes.pop_back();
    CHECK_THROWS_AS(parse_pgm(bytes), ParseError);
}
