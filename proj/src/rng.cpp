#include "llp/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace llp {

std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % bound;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = uniform_below(rng, i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace llp
