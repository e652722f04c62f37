#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "chash/layout.hpp"

namespace chash::root {

// "CHASHRT1" read as a little-endian word.
inline constexpr std::uint64_t kMagic = 0x3154524853414843ULL;
inline constexpr std::uint64_t kMagicAddr = 0;
inline constexpr std::uint64_t kControlAddr = 8;
inline constexpr std::array<std::uint64_t, 2> kDescriptorAddr = {64, 128};
inline constexpr std::size_t kDescriptorBytes = 32;
// First byte available to the allocator.
inline constexpr std::uint64_t kDataStart = 192;

// The control word is the only field that changes which table is current, so
// a single aligned atomic store commits a resize.
struct Control {
  unsigned active = 0;
  bool resizing = false;
  std::uint64_t epoch = 0;

  std::uint64_t encode() const noexcept {
    return (epoch << 8) | (resizing ? 2U : 0U) | (active & 1U);
  }
  static Control decode(std::uint64_t word) noexcept {
    return {static_cast<unsigned>(word & 1U), (word & 2U) != 0, word >> 8};
  }
};

using DescriptorBytes = std::array<std::uint8_t, kDescriptorBytes>;

// base u64 | buckets u64 | sbuckets u32 | indicator size u32 | FNV-1a u64 of
// the first 24 bytes.
DescriptorBytes encode_descriptor(const TableLayout& layout);
// Empty when the checksum does not match.
std::optional<TableLayout> decode_descriptor(
    std::span<const std::uint8_t, kDescriptorBytes> bytes);

}  // namespace chash::root
