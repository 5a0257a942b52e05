#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cdemr {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Seed for an independent stream identified by (seed, ids...). Streams are
// derived from counters, never from execution order, so parallel runs draw
// the same numbers as serial ones.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t h = splitmix64(seed);
    for (auto id : ids) h = splitmix64(h ^ splitmix64(id + 0x632BE59BD9B4E019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    return Rng(derive_seed(seed, ids));
}

}  // namespace cdemr
