#pragma once

#include <cstdint>
#include <string_view>

namespace pdnet {

/// splitmix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

/// Child seed for one purpose, e.g. derive_seed(top, "fold", 3).
/// Every random stream in the project is reached from the top-level seed
/// through a chain of these calls.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view purpose,
                                    std::uint64_t index = 0) {
    return mix64(mix64(parent ^ fnv1a(purpose)) ^ mix64(index + 0x632BE59BD9B4E019ull));
}

}  // namespace pdnet
