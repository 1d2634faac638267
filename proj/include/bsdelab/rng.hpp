#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace bsdelab {

// Philox4x32-10 counter-based generator. Every draw is a pure function of
// (key, counter), so any path can be regenerated without touching its
// neighbours and results do not depend on how work is split across threads.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += 0x9E3779B9u;
                key[1] += 0xBB67AE85u;
            }
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }
};

// Standard normal stream for one (seed, tag, path) triple. Draw q of the
// stream is addressed directly; two normals come out of each Philox block.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint32_t tag, std::uint64_t path)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          path_lo_(static_cast<std::uint32_t>(path)),
          path_hi_tag_(static_cast<std::uint32_t>(path >> 32) ^ (tag << 8)) {}

    // Fill out with draws [first, first + out.size()).
    void fill(std::uint64_t first, std::span<double> out) const {
        std::size_t i = 0;
        std::uint64_t q = first;
        while (i < out.size()) {
            const auto [a, b] = pair(q / 2);
            if (q % 2 == 0) {
                out[i++] = a;
                ++q;
                if (i < out.size()) {
                    out[i++] = b;
                    ++q;
                }
            } else {
                out[i++] = b;
                ++q;
            }
        }
    }

    double at(std::uint64_t q) const {
        const auto [a, b] = pair(q / 2);
        return q % 2 == 0 ? a : b;
    }

private:
    std::array<double, 2> pair(std::uint64_t block) const {
        const auto r = Philox4x32::generate(
            {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32), path_lo_,
             path_hi_tag_},
            key_);
        const double u1 = uniform(r[0], r[1]);
        const double u2 = uniform(r[2], r[3]);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        return {rad * std::cos(ang), rad * std::sin(ang)};
    }

    // open interval (0,1), 53 bits
    static double uniform(std::uint32_t lo, std::uint32_t hi) {
        const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
    std::uint32_t path_lo_;
    std::uint32_t path_hi_tag_;
};

// Stream tags keep the independent uses of one seed apart.
namespace stream_tag {
inline constexpr std::uint32_t forward_paths = 1;
inline constexpr std::uint32_t initial_state = 2;
inline constexpr std::uint32_t semigroup_mc = 3;
inline constexpr std::uint32_t driver_audit = 4;
inline constexpr std::uint32_t sampler_audit = 5;
}  // namespace stream_tag

}  // namespace bsdelab
