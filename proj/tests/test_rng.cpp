#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "bsdelab/rng.hpp"

using bsdelab::NormalStream;
using bsdelab::Philox4x32;

// Known-answer vectors of the reference Philox4x32-10 implementation.
TEST_CASE("philox known answers", "[rng]") {
    auto r = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
    CHECK(r == Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    r = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    CHECK(r == Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    r = Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    CHECK(r == Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("normal stream is random access", "[rng]") {
    NormalStream s(42, 1, 7);
    std::vector<double> block(9);
    s.fill(0, block);
    for (std::size_t q = 0; q < block.size(); ++q) CHECK(block[q] == s.at(q));
    std::vector<double> tail(4);
    s.fill(3, tail);
    for (std::size_t q = 0; q < tail.size(); ++q) CHECK(tail[q] == block[q + 3]);
}

TEST_CASE("normal stream moments", "[rng]") {
    const std::size_t n = 200000;
    double m1 = 0, m2 = 0, m4 = 0;
    NormalStream s(123456789, 2, 0);
    std::vector<double> x(n);
    s.fill(0, x);
    for (double v : x) {
        m1 += v;
        m2 += v * v;
        m4 += v * v * v * v;
    }
    m1 /= n;
    m2 /= n;
    m4 /= n;
    CHECK(std::abs(m1) < 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(m2 - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(m4 - 3.0) < 4.0 * std::sqrt(96.0 / n));
}

TEST_CASE("streams differ by path, tag and seed", "[rng]") {
    const double a = NormalStream(1, 1, 0).at(0);
    CHECK(a != NormalStream(1, 1, 1).at(0));
    CHECK(a != NormalStream(1, 2, 0).at(0));
    CHECK(a != NormalStream(2, 1, 0).at(0));
}
