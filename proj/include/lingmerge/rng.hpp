#pragma once

#include <cstdint>
#include <string_view>

namespace lingmerge::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a; stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stream key for one tensor of one model.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::string_view model_label,
                                   std::string_view tensor_name) noexcept {
    std::uint64_t h = fnv1a(model_label);
    h = fnv1a(std::string_view("\0", 1), h);
    h = fnv1a(tensor_name, h);
    return splitmix64(seed ^ splitmix64(h));
}

// Counter-based uniform draw in [0, 1): depends only on (key, index), so any
// partition of the index range across threads yields the same values.
constexpr double uniform(std::uint64_t key, std::uint64_t index) noexcept {
    const std::uint64_t bits = splitmix64(key + splitmix64(index));
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace lingmerge::rng
