#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lexprobe {

/// 64-bit FNV-1a. Stable across platforms; used for seeding and content keys.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept {
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Generator whose output sequence is fixed by the standard (unlike the
/// std distributions layered on top of it).
using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::string_view stream = {}) {
    return Engine{splitmix64(seed ^ splitmix64(fnv1a64(stream)))};
}

/// Uniform integer in [0, bound), bound > 0. Rejection sampling keeps it
/// unbiased and identical on every standard library.
inline std::uint64_t uniform_below(Engine& rng, std::uint64_t bound) {
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound + 1) % bound;
    std::uint64_t draw;
    do {
        draw = rng();
    } while (draw > limit);
    return draw % bound;
}

/// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform_unit(Engine& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace lexprobe
