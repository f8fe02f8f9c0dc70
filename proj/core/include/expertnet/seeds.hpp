#pragma once

#include <cstdint>

namespace expertnet {

/// splitmix64-style mix of a master seed and a stream tag; used everywhere a
/// stage or sub-task needs its own deterministic seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

}  // namespace expertnet
