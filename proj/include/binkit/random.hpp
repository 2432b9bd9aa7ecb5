#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Deterministic sampling built directly on mt19937_64 output. The standard
// <random> distributions are implementation-defined, so results would vary
// across toolchains; these helpers pin the exact value stream for a given
// seed everywhere.

namespace binkit::rng {

using Engine = std::mt19937_64;

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Uniform double in [lo, hi).
inline double uniform(Engine& eng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(eng);
}

/// Uniform integer in [0, n), n > 0. Uses rejection to avoid modulo bias.
inline uint64_t below(Engine& eng, uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = eng();
    } while (x >= limit);
    return x % n;
}

/// Standard normal via Box-Muller (one value per call; no cached spare, so
/// the stream stays a pure function of draw count).
inline double normal(Engine& eng) {
    double u1;
    do {
        u1 = uniform01(eng);
    } while (u1 <= 0.0);
    const double u2 = uniform01(eng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
}

/// In-place Fisher-Yates shuffle with the pinned integer stream.
template <typename Vec>
void shuffle(Engine& eng, Vec& items) {
    for (size_t i = items.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(below(eng, i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace binkit::rng
