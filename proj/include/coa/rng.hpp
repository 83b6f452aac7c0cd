#pragma once

#include <cstdint>
#include <string_view>

namespace coa {

// 64-bit FNV-1a, used to fold strings into seed material.
constexpr uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// splitmix64 finalizer. Counter-based draws (hash of seed+index) keep every
// element independent of evaluation order, so parallel fills are bit-identical
// to serial ones.
constexpr uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Uniform double in [0, 1) from a 64-bit word (53-bit mantissa).
constexpr double unit_double(uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Per-element draw for counter-based fills.
inline double uniform_at(uint64_t seed, uint64_t index, double lo, double hi) {
    const uint64_t h = splitmix64(splitmix64(seed) ^ (index * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull));
    return lo + (hi - lo) * unit_double(h);
}

// One global seed; everything else hangs off (example id, stage name).
inline uint64_t derive_seed(uint64_t global_seed, std::string_view example_id, std::string_view stage) {
    uint64_t h = splitmix64(global_seed ^ fnv1a64(example_id));
    return splitmix64(h ^ fnv1a64(stage));
}

}  // namespace coa
