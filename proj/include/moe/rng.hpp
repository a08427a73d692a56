#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>

namespace moe {

// splitmix64 finalizer; used to derive independent stream seeds from a
// master seed so that parallel workers and reruns stay reproducible.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A1C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
    return splitmix64(splitmix64(base) ^ salt);
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(base, a), b);
}

// FNV-1a, for folding short identifier strings into seed derivations.
inline std::uint64_t hash_string(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

// Uniform double in [0, 1) built from the top 53 bits of the generator
// output; bit-reproducible across platforms, unlike
// std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Inverse-CDF draw from an unnormalized-tolerant categorical row.
// Zero-probability entries are never selected.
inline int sample_categorical(std::span<const double> probs, std::mt19937_64& rng) {
    if (probs.empty()) throw std::invalid_argument("sample_categorical: empty distribution");
    const double u = uniform01(rng);
    double cum = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        cum += probs[i];
        last_positive = static_cast<int>(i);
        if (u < cum) return last_positive;
    }
    if (last_positive < 0) throw std::invalid_argument("sample_categorical: no positive mass");
    return last_positive;  // u landed in the rounding slack past the final bucket
}

}  // namespace moe
