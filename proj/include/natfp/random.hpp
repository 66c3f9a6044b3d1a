#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace natfp {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a over a string, for folding names into seeds.
constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derives a child seed from a master seed and a path of components, so that
/// independent tasks get independent, reproducible streams.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t s = splitmix64(master);
    for (auto p : parts) s = splitmix64(s ^ splitmix64(p));
    return s;
}

} // namespace natfp
