#pragma once

#include <cstdint>
#include <span>

namespace chash {

inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                                std::uint64_t seed = kFnvOffsetBasis) noexcept {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  return h;
}

using HashFn = std::uint64_t (*)(std::span<const std::uint8_t>);

inline std::uint64_t default_hash(std::span<const std::uint8_t> bytes) {
  return fnv1a64(bytes);
}

}  // namespace chash
