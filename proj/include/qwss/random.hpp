#pragma once

// Counter-based Philox4x32-10 generator (Salmon et al., SC'11).
//
// Stream layout used throughout the library: the 64-bit seed is the key;
// the 128-bit counter is (draw_lo, draw_hi, substream_lo, substream_hi).
// Every random quantity is addressed by (seed, substream, draw) so results do
// not depend on evaluation order.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>

namespace qwss {

class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox4x32(std::uint64_t seed) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    Philox4x32(std::uint32_t k0, std::uint32_t k1) noexcept : key_{k0, k1} {}

    Block operator()(Block ctr) const noexcept {
        std::array<std::uint32_t, 2> key = key_;
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

    Block at(std::uint64_t substream, std::uint64_t draw) const noexcept {
        return (*this)({static_cast<std::uint32_t>(draw), static_cast<std::uint32_t>(draw >> 32),
                        static_cast<std::uint32_t>(substream), static_cast<std::uint32_t>(substream >> 32)});
    }

    /// Standard circular complex Gaussian (E|z|^2 = 1) by Box-Muller on one block.
    std::complex<double> complex_gaussian(std::uint64_t substream, std::uint64_t draw) const {
        const Block b = at(substream, draw);
        const double u1 = to_unit_open(b[0], b[1]);
        const double u2 = to_unit_open(b[2], b[3]);
        const double r = std::sqrt(-std::log(u1));  // variance 1/2 per component
        const double angle = 6.283185307179586 * u2;
        return {r * std::cos(angle), r * std::sin(angle)};
    }

private:
    /// 53-bit uniform in (0, 1).
    static double to_unit_open(std::uint32_t hi, std::uint32_t lo) noexcept {
        const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    std::array<std::uint32_t, 2> key_;
};

}  // namespace qwss
