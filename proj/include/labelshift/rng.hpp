#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace labelshift {

// Deterministic random source. All transforms (uniform reals, bounded
// integers, normals) are spelled out here instead of going through
// std::*_distribution, whose output is implementation-defined; the same
// seed must reproduce the same draw sequence on every build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Unbiased integer in [0, n) via rejection sampling.
    std::uint64_t uniform_below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // Standard normal via Box-Muller; draws two uniforms per pair.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a style mixing for deriving per-task seeds from a base seed and a
// sequence of labels. Derivations are stable across runs and insensitive
// to unrelated additions elsewhere in a sweep.
inline std::uint64_t seed_mix(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    // splitmix64 finalizer
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebULL;
    h ^= h >> 31;
    return h;
}

inline std::uint64_t seed_mix(std::uint64_t h, std::string_view s) {
    std::uint64_t acc = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        acc ^= c;
        acc *= 0x100000001b3ULL;
    }
    return seed_mix(h, acc);
}

}  // namespace labelshift
