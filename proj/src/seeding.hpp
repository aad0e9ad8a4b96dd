#pragma once

#include <cstdint>
#include <random>

namespace cdrforge::detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
    return splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index);
}

/// Independent engine for (seed, tag, index).
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
    return std::mt19937_64(derive_seed(seed, tag, index));
}

} // namespace cdrforge::detail
