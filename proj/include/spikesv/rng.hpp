#pragma once

// Counter-based random number generation. Every variate is a pure function
// of (seed, row, column), so matrices can be filled in any order, by any
// number of threads, and come out bit-identical.

#include <array>
#include <cmath>
#include <cstdint>

namespace spikesv::rng {

// Philox4x32-10 block cipher (Salmon et al. constants).
namespace detail {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::array<std::uint32_t, 4>& c, std::uint32_t k0, std::uint32_t k1) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
}

}  // namespace detail

// One 128-bit block keyed by a 64-bit seed and a 4-word counter.
inline std::array<std::uint32_t, 4> philox4x32(std::uint64_t key,
                                               std::uint32_t c0, std::uint32_t c1,
                                               std::uint32_t c2 = 0, std::uint32_t c3 = 0) {
    std::array<std::uint32_t, 4> ctr = {c0, c1, c2, c3};
    auto k0 = static_cast<std::uint32_t>(key);
    auto k1 = static_cast<std::uint32_t>(key >> 32);
    for (int round = 0; round < 10; ++round) {
        detail::philox_round(ctr, k0, k1);
        k0 += detail::kPhiloxW0;
        k1 += detail::kPhiloxW1;
    }
    return ctr;
}

// SplitMix64 finalizer; used to derive independent streams (one per
// replicate) from a master seed:  split(s, i) = mix(s + (i+1)*GOLDEN).
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t index) {
    return mix64(master + 0x9E3779B97F4A7C15ull * (index + 1));
}

// 53-bit uniform in the open interval (0, 1).
inline double u01(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

// Standard normal via Box-Muller from one Philox block.
inline double gaussian(const std::array<std::uint32_t, 4>& w) {
    const double u1 = u01(w[0], w[1]);
    const double u2 = u01(w[2], w[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

}  // namespace spikesv::rng
