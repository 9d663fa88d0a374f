#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace confeval {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to fan one seed out into independent sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Named sub-seed ("partition", "training", "search", ...).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return mix_seed(base ^ h);
}

// Indexed sub-seed; index 0 returns the base seed unchanged.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::size_t index) noexcept {
    return index == 0 ? base : mix_seed(base + 0x9E3779B97F4A7C15ULL * index);
}

}  // namespace confeval
