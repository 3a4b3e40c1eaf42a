#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace llp {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a sequence of integer tags,
/// e.g. derive_seed(run_seed, {epoch, bag_index}).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t t : tags) h = mix64(h ^ mix64(t + 0x632be59bd9b4e019ULL));
    return h;
}

/// Fisher-Yates over [0, n) driven only by the engine's raw output, so the
/// permutation does not depend on the standard library's distribution code.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// Uniform integer in [0, bound) by rejection; bound > 0.
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller on uniform01.
double standard_normal(Rng& rng);

} // namespace llp
