#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>

namespace chash {

enum class Parity : std::uint8_t { kEven, kOdd };

constexpr Parity parity_of(std::uint64_t bucket) noexcept {
  return (bucket & 1U) != 0 ? Parity::kOdd : Parity::kEven;
}

class LayoutError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SegmentRange {
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

// Indicator bits in the order a write probes them: the key's segment first
// (parity-dependent direction), then the added SBucket group ascending.
struct ScanOrder {
  std::array<std::uint8_t, 64> bits{};
  std::uint8_t segment_count = 0;
  std::uint8_t total = 0;
};

// Geometry of one continuity hash table inside a PM region. LAYOUT.md
// describes the byte format.
//
// A segment pair occupies `pair_stride()` bytes:
//
//   | even bucket | indicator field | shared SBuckets | odd bucket |
//
// The even segment is [even bucket, shared SBuckets] and the odd segment is
// [indicator field, odd bucket]; both are `size_se()` bytes and both contain
// the indicator.
struct TableLayout {
  static constexpr std::uint32_t kSlotsPerBucket = 4;
  static constexpr std::uint64_t kSlotBytes = 32;
  static constexpr std::uint64_t kBucketBytes = kSlotsPerBucket * kSlotBytes;
  static constexpr std::uint32_t kAddedSBuckets = 3;
  static constexpr std::uint32_t kAddedSlots = kAddedSBuckets * kSlotsPerBucket;
  static constexpr std::uint64_t kAddedGroupBytes = kAddedSBuckets * kBucketBytes;
  static constexpr std::uint32_t kPaddedIndicator = 64;
  static constexpr std::uint32_t kPackedIndicator = 8;

  std::uint64_t base_addr = 0;
  std::uint64_t buckets = 20;
  std::uint32_t sbuckets_per_pair = 3;
  std::uint32_t indicator_size = kPaddedIndicator;

  std::uint64_t pairs() const noexcept { return buckets / 2; }
  std::uint64_t size_bu() const noexcept { return kBucketBytes; }
  std::uint64_t size_se() const noexcept {
    return kBucketBytes + indicator_size + sbuckets_per_pair * kBucketBytes;
  }
  std::uint64_t pair_stride() const noexcept { return size_se() + kBucketBytes; }
  std::uint64_t table_bytes() const noexcept { return pairs() * pair_stride(); }

  // One 8-byte entry per pair, placed after the buckets.
  std::uint64_t directory_addr() const noexcept;
  std::uint64_t directory_bytes() const noexcept;
  std::uint64_t directory_entry_addr(std::uint64_t pair) const noexcept {
    return directory_addr() + pair * 8;
  }
  // Buckets plus directory.
  std::uint64_t extent_bytes() const noexcept;

  std::uint64_t pair_base(std::uint64_t pair) const noexcept {
    return base_addr + pair * pair_stride();
  }
  std::uint64_t indicator_addr(std::uint64_t pair) const noexcept {
    return pair_base(pair) + kBucketBytes;
  }

  // Offset and length of the segment whose home is `bucket`.
  SegmentRange segment(std::uint64_t bucket) const;

  // Indicator bit assignment.
  unsigned sbucket_first_bit() const noexcept { return kSlotsPerBucket; }
  unsigned odd_first_bit() const noexcept {
    return kSlotsPerBucket * (1 + sbuckets_per_pair);
  }
  unsigned added_first_bit() const noexcept {
    return kSlotsPerBucket * (2 + sbuckets_per_pair);
  }
  unsigned pair_slots() const noexcept { return added_first_bit(); }
  unsigned bit_count() const noexcept { return added_first_bit() + kAddedSlots; }

  std::uint64_t segment_mask(Parity parity) const noexcept;
  std::uint64_t added_mask() const noexcept;
  std::uint64_t valid_mask() const noexcept;

  std::uint64_t slot_addr(std::uint64_t pair, unsigned bit,
                          std::uint64_t group_addr = 0) const;
  // Offsets inside the bytes of a fetched segment.
  std::uint64_t segment_indicator_offset(Parity parity) const noexcept;
  std::uint64_t segment_slot_offset(Parity parity, unsigned bit) const;

  ScanOrder scan_order(Parity parity) const;

  // Throws LayoutError for geometry that cannot be used.
  void validate() const;
  // Buckets, indicators and every slot sit on `line` boundaries or within
  // a single line.
  bool line_aligned(std::uint64_t line = 64) const noexcept;

  friend bool operator==(const TableLayout&, const TableLayout&) = default;
};

}  // namespace chash
