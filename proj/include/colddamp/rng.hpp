#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "colddamp/constants.hpp"

// Counter-based random streams (Philox4x32-10).  Every consumer owns a stream
// keyed by (seed, stream index, channel tag); streams never share state, so
// trajectories parallelize trivially and runs replay bit-identically from the
// seed alone.
namespace colddamp {

// One 10-round Philox4x32 block: 128-bit counter, 64-bit key -> 4 x uint32.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t(m0) * ctr[0];
        const std::uint64_t p1 = std::uint64_t(m1) * ctr[2];
        ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
               std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
        key[0] += w0;
        key[1] += w1;
    }
    return ctr;
}

// Standard normal deviates via Box-Muller on counter blocks.  Each block
// yields two doubles with 53-bit mantissas; pairs are consumed in order, so a
// stream's n-th draw is a pure function of (seed, stream, channel, n).
class NormalStream {
  public:
    NormalStream(std::uint64_t seed, std::uint32_t stream, std::uint32_t channel)
        : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)}, stream_(stream), channel_(channel) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const auto block = philox4x32(
            {std::uint32_t(counter_), std::uint32_t(counter_ >> 32), stream_, channel_}, key_);
        ++counter_;
        const double u1 = to_unit_open(block[0], block[1]);  // in (0, 1]
        const double u2 = to_unit_open(block[2], block[3]);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = two_pi * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

  private:
    // Map 64 random bits to (0, 1]: never 0, so log() is safe.
    static double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
        const std::uint64_t bits = (std::uint64_t(hi) << 32) | lo;
        return double((bits >> 11) + 1) * 0x1.0p-53;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint32_t stream_;
    std::uint32_t channel_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace colddamp
