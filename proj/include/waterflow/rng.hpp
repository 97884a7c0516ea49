// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_RNG_HPP
#define WATERFLOW_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace wf {

// Stream offsets used with Rng::split. Every consumer of randomness draws from
// its own stream so that adding draws in one place never shifts another.
namespace stream {
inline constexpr std::uint64_t init = 1;      // parameter initialization
inline constexpr std::uint64_t noise = 2;     // X_0 draws
inline constexpr std::uint64_t time = 3;      // t ~ U[0,1]
inline constexpr std::uint64_t dropout = 4;   // prior dropout coin flips
inline constexpr std::uint64_t shuffle = 5;   // epoch permutations
inline constexpr std::uint64_t scene = 6;     // synthetic scene content
inline constexpr std::uint64_t sample = 7;    // per-occurrence training draws
} // namespace stream

namespace detail {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

// Counter-based generator: draw k of a state is a pure function of
// (seed, k), so identical states give identical sequences everywhere.
class Rng {
public:
    constexpr Rng() = default;
    constexpr explicit Rng(std::uint64_t seed, std::uint64_t counter = 0) noexcept : seed_(seed), counter_(counter) {}

    constexpr std::uint64_t seed() const noexcept { return seed_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }

    constexpr std::uint64_t next_u64() noexcept {
        const std::uint64_t k = counter_++;
        return detail::mix64(seed_ ^ detail::mix64(k ^ 0x6a09e667f3bcc909ULL));
    }

    // Independent child generator; does not advance this one.
    constexpr Rng split(std::uint64_t stream_id) const noexcept {
        return Rng(detail::mix64(seed_ + detail::mix64(stream_id * 0xd1b54a32d192ed03ULL + 0x3c6ef372fe94f82bULL)));
    }

    // [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept {
        // Lemire-style rejection keeps the result unbiased.
        const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
        std::uint64_t v = next_u64();
        while (v >= limit) {
            v = next_u64();
        }
        return v % n;
    }

    // Standard normal via Box-Muller; consumes exactly two draws.
    double normal() noexcept {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    friend constexpr bool operator==(const Rng&, const Rng&) = default;

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace wf

#endif
