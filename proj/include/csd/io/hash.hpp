#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace csd::io {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// 64-bit FNV-1a, chainable through `state`.
inline std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t state = kFnvOffset)
{
    for (unsigned char b : bytes) {
        state ^= b;
        state *= kFnvPrime;
    }
    return state;
}

inline std::uint64_t fnv1a(std::string_view text, std::uint64_t state = kFnvOffset)
{
    return fnv1a(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()), state);
}

std::string to_hex(std::uint64_t value);

}  // namespace csd::io
