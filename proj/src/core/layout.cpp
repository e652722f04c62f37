#include "chash/layout.hpp"

#include <string>

namespace chash {

namespace {

constexpr std::uint64_t round_up(std::uint64_t v, std::uint64_t to) {
  return (v + to - 1) / to * to;
}

constexpr std::uint64_t bit_range(unsigned first, unsigned count) {
  if (count == 0) return 0;
  const std::uint64_t ones = count >= 64 ? ~0ULL : ((1ULL << count) - 1);
  return ones << first;
}

}  // namespace

std::uint64_t TableLayout::directory_addr() const noexcept {
  return round_up(base_addr + table_bytes(), 64);
}

std::uint64_t TableLayout::directory_bytes() const noexcept {
  return round_up(pairs() * 8, 64);
}

std::uint64_t TableLayout::extent_bytes() const noexcept {
  return directory_addr() + directory_bytes() - base_addr;
}

SegmentRange TableLayout::segment(std::uint64_t bucket) const {
  if (bucket >= buckets) {
    throw std::out_of_range("bucket " + std::to_string(bucket) +
                            " outside table of " + std::to_string(buckets));
  }
  const std::uint64_t pair = bucket / 2;
  std::uint64_t offset = base_addr + pair * pair_stride();
  if (parity_of(bucket) == Parity::kOdd) offset += kBucketBytes;
  return {offset, size_se()};
}

std::uint64_t TableLayout::segment_mask(Parity parity) const noexcept {
  const unsigned shared = kSlotsPerBucket * sbuckets_per_pair;
  if (parity == Parity::kEven) return bit_range(0, kSlotsPerBucket + shared);
  return bit_range(sbucket_first_bit(), shared + kSlotsPerBucket);
}

std::uint64_t TableLayout::added_mask() const noexcept {
  return bit_range(added_first_bit(), kAddedSlots);
}

std::uint64_t TableLayout::valid_mask() const noexcept {
  return bit_range(0, bit_count());
}

std::uint64_t TableLayout::slot_addr(std::uint64_t pair, unsigned bit,
                                     std::uint64_t group_addr) const {
  const std::uint64_t base = pair_base(pair);
  if (bit < sbucket_first_bit()) return base + bit * kSlotBytes;
  if (bit < odd_first_bit()) {
    return base + kBucketBytes + indicator_size +
           (bit - sbucket_first_bit()) * kSlotBytes;
  }
  if (bit < added_first_bit()) {
    return base + kBucketBytes + indicator_size +
           sbuckets_per_pair * kBucketBytes +
           (bit - odd_first_bit()) * kSlotBytes;
  }
  if (bit < bit_count()) {
    if (group_addr == 0) {
      throw std::logic_error("added slot addressed without an added group");
    }
    return group_addr + (bit - added_first_bit()) * kSlotBytes;
  }
  throw std::out_of_range("indicator bit " + std::to_string(bit));
}

std::uint64_t TableLayout::segment_indicator_offset(
    Parity parity) const noexcept {
  return parity == Parity::kEven ? kBucketBytes : 0;
}

std::uint64_t TableLayout::segment_slot_offset(Parity parity,
                                               unsigned bit) const {
  if ((segment_mask(parity) >> bit & 1U) == 0) {
    throw std::out_of_range("bit " + std::to_string(bit) +
                            " is not part of this segment");
  }
  const std::uint64_t pair_offset = slot_addr(0, bit) - base_addr;
  return parity == Parity::kEven ? pair_offset : pair_offset - kBucketBytes;
}

ScanOrder TableLayout::scan_order(Parity parity) const {
  ScanOrder order;
  auto push = [&order](unsigned bit) {
    order.bits[order.total++] = static_cast<std::uint8_t>(bit);
  };
  if (parity == Parity::kEven) {
    for (unsigned b = 0; b < odd_first_bit(); ++b) push(b);
  } else {
    for (unsigned b = added_first_bit(); b-- > sbucket_first_bit();) push(b);
  }
  order.segment_count = order.total;
  for (unsigned b = added_first_bit(); b < bit_count(); ++b) push(b);
  return order;
}

void TableLayout::validate() const {
  if (buckets < 2 || buckets % 2 != 0) {
    throw LayoutError("bucket count must be even and at least 2");
  }
  if (sbuckets_per_pair == 0) {
    throw LayoutError("a segment pair needs at least one SBucket");
  }
  if (bit_count() > 64) {
    throw LayoutError("indicator needs " + std::to_string(bit_count()) +
                      " bits; at most 64 fit in one atomic word");
  }
  if (indicator_size < 8 || indicator_size % 8 != 0) {
    throw LayoutError("indicator field must be a multiple of 8 bytes");
  }
  if (base_addr % 8 != 0) {
    throw LayoutError("table base must be 8-byte aligned");
  }
}

bool TableLayout::line_aligned(std::uint64_t line) const noexcept {
  return base_addr % line == 0 && kBucketBytes % line == 0 &&
         indicator_size % line == 0;
}

}  // namespace chash
