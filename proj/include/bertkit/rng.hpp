#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace bertkit {

// All randomness in the library flows through one of these helpers so that
// runs are reproducible from a single seed. Distributions are implemented
// here rather than taken from <random> because the standard leaves
// distribution output unspecified; engine output (mt19937_64) is pinned by
// the standard.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Derives an independent stream seed from (base seed, purpose tag, index).
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index = 0) {
    return splitmix64(base ^ splitmix64(fnv1a64(tag) + 0x9e3779b97f4a7c15ull * index));
}

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_real(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(Rng& rng, double p) { return uniform_real(rng) < p; }

// Uniform integer in [0, n). Rejection sampling keeps the draw unbiased.
inline uint64_t uniform_index(Rng& rng, uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

// Standard normal via Box-Muller (one value per call; the pair's second
// member is discarded to keep call sites stateless).
inline double normal(Rng& rng) {
    double u1 = uniform_real(rng);
    while (u1 == 0.0) u1 = uniform_real(rng);
    const double u2 = uniform_real(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Normal(0, stddev) truncated to [-2*stddev, 2*stddev], the usual BERT
// initializer shape.
inline double truncated_normal(Rng& rng, double stddev) {
    for (;;) {
        const double z = normal(rng);
        if (z >= -2.0 && z <= 2.0) return z * stddev;
    }
}

}  // namespace bertkit
