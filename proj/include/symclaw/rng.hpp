#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace symclaw {

/// Deterministic random stream.
///
/// std::mt19937_64 output is pinned by the standard, but the distribution
/// adaptors are not, so this wraps the engine with hand-rolled uniform and
/// normal transforms to keep generated datasets byte-identical everywhere.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(mix(seed)) {}

    /// Independent stream for sub-task `k` of a run seeded with `seed`.
    static Rng stream(uint64_t seed, uint64_t k) {
        return Rng(mix(seed) ^ (0x9E3779B97F4A7C15ULL * (k + 1)));
    }

    uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller (no cached second value, so the
    /// consumption pattern stays independent of call sites).
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    static uint64_t mix(uint64_t x) {
        // splitmix64 finalizer
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }
    std::mt19937_64 eng_;
};

}  // namespace symclaw
