#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace spinbath {

using Rng = std::mt19937_64;

/// Derives an independent generator from a root seed and a path of stream labels,
/// e.g. make_stream(seed, {ensemble, strand}). No global RNG exists anywhere.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::seed_seq::result_type words[16];
    std::size_t n = 0;
    words[n++] = static_cast<std::uint32_t>(seed);
    words[n++] = static_cast<std::uint32_t>(seed >> 32);
    for (auto p : path) {
        if (n + 2 > std::size(words))
            break;
        words[n++] = static_cast<std::uint32_t>(p) ^ 0x9e3779b9u;
        words[n++] = static_cast<std::uint32_t>(p >> 32);
    }
    std::seed_seq seq(words, words + n);
    return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

} // namespace spinbath
