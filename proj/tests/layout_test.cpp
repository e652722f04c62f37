#include "chash/layout.hpp"

#include <gtest/gtest.h>

#include <random>
#include <string>

#include "chash/hash.hpp"
#include "chash/key_value.hpp"
#include "chash/root.hpp"

namespace chash {
namespace {

TableLayout packed() {
  TableLayout l;
  l.base_addr = 0;
  l.buckets = 20;
  l.sbuckets_per_pair = 3;
  l.indicator_size = TableLayout::kPackedIndicator;
  return l;
}

TEST(Hash, FnvMatchesPublishedVector) {
  const std::string a = "a";
  EXPECT_EQ(fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(a.data()),
                              a.size())),
            0xaf63dc4c8601ec8cULL);
}

TEST(Hash, SixteenAsBucketMatchesReferenceValue) {
  // Computed with a separate FNV-1a implementation.
  const Key key = Key::from_string("AAAAAAAAAAAAAAAA");
  EXPECT_EQ(default_hash(key.bytes()), 1561731169944218229ULL);
  EXPECT_EQ(default_hash(key.bytes()) % 20, 9U);
}

TEST(Layout, PackedSegmentOffsets) {
  const TableLayout l = packed();
  EXPECT_EQ(l.size_se(), 520U);
  EXPECT_EQ(l.pair_stride(), 648U);
  EXPECT_EQ(l.segment(0).offset, 0U);
  EXPECT_EQ(l.segment(0).length, 520U);
  EXPECT_EQ(l.segment(4).offset, 4U / 2 * 648);
  EXPECT_EQ(l.segment(5).offset, (5U - 1) / 2 * 648 + 128);
  EXPECT_EQ(l.segment(5).length, 520U);
}

TEST(Layout, PaddedDefaultKeepsLinesAligned) {
  TableLayout l;
  l.base_addr = 192;
  EXPECT_EQ(l.size_se(), 576U);
  EXPECT_EQ(l.pair_stride(), 704U);
  EXPECT_EQ(l.pair_stride(), 2 * l.size_bu() + l.indicator_size +
                                 l.sbuckets_per_pair * l.size_bu());
  EXPECT_TRUE(l.line_aligned());
  EXPECT_FALSE(packed().line_aligned());
  for (std::uint64_t pair = 0; pair < l.pairs(); ++pair) {
    EXPECT_EQ(l.pair_base(pair) % 64, 0U);
    EXPECT_EQ(l.indicator_addr(pair) % 8, 0U);
    for (unsigned bit = 0; bit < l.pair_slots(); ++bit) {
      const auto a = l.slot_addr(pair, bit);
      EXPECT_EQ(a / 64, (a + 31) / 64) << "slot straddles a line";
    }
  }
}

TEST(Layout, OutOfRangeBucketThrows) {
  EXPECT_THROW(packed().segment(20), std::out_of_range);
}

TEST(Layout, IndicatorBitAssignment) {
  TableLayout l;
  EXPECT_EQ(l.sbucket_first_bit(), 4U);
  EXPECT_EQ(l.odd_first_bit(), 16U);
  EXPECT_EQ(l.added_first_bit(), 20U);
  EXPECT_EQ(l.bit_count(), 32U);
  EXPECT_EQ(l.segment_mask(Parity::kEven), 0xFFFFULL);
  EXPECT_EQ(l.segment_mask(Parity::kOdd), 0xFFFF0ULL);
  EXPECT_EQ(l.added_mask(), 0xFFF00000ULL);
}

TEST(Layout, ScanOrders) {
  TableLayout l;
  const ScanOrder even = l.scan_order(Parity::kEven);
  const ScanOrder odd = l.scan_order(Parity::kOdd);
  ASSERT_EQ(even.segment_count, 16);
  ASSERT_EQ(even.total, 28);
  for (unsigned i = 0; i < 16; ++i) EXPECT_EQ(even.bits[i], i);
  // Odd homes probe their own bucket (bits 19..16) first, then SBuckets.
  for (unsigned i = 0; i < 16; ++i) EXPECT_EQ(odd.bits[i], 19 - i);
  for (unsigned i = 0; i < 12; ++i) {
    EXPECT_EQ(even.bits[16 + i], 20 + i);
    EXPECT_EQ(odd.bits[16 + i], 20 + i);
  }
}

TEST(Layout, PairMemoryOrder) {
  TableLayout l;
  l.base_addr = 1024;
  const auto base = l.pair_base(3);
  EXPECT_EQ(l.slot_addr(3, 0), base);
  EXPECT_EQ(l.indicator_addr(3), base + 128);
  EXPECT_EQ(l.slot_addr(3, 4), base + 128 + 64);
  EXPECT_EQ(l.slot_addr(3, 16), base + 128 + 64 + 384);
  EXPECT_EQ(l.slot_addr(3, 19) + 32, base + l.pair_stride());
  EXPECT_EQ(l.slot_addr(3, 21, 4096), 4096U + 32);
  EXPECT_THROW((void)l.slot_addr(3, 21, 0), std::logic_error);
}

TEST(Layout, SegmentsContainTheirSlotsAndIndicator) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    TableLayout l;
    l.base_addr = (rng() % 100) * 64;
    l.buckets = 2 * (1 + rng() % 50);
    l.sbuckets_per_pair = 1 + rng() % 10;
    l.indicator_size = rng() % 2 ? 64 : 8;
    l.validate();
    const std::uint64_t bucket = rng() % l.buckets;
    const Parity p = parity_of(bucket);
    const SegmentRange seg = l.segment(bucket);
    const std::uint64_t pair = bucket / 2;
    EXPECT_EQ(seg.offset + l.segment_indicator_offset(p), l.indicator_addr(pair));
    for (unsigned bit = 0; bit < l.pair_slots(); ++bit) {
      const bool in = (l.segment_mask(p) >> bit & 1U) != 0;
      const auto addr = l.slot_addr(pair, bit);
      const bool inside = addr >= seg.offset && addr + 32 <= seg.offset + seg.length;
      EXPECT_EQ(in, inside);
      if (in) {
        EXPECT_EQ(seg.offset + l.segment_slot_offset(p, bit), addr);
      }
    }
  }
}

TEST(Layout, ValidateRejectsUnusableGeometry) {
  TableLayout l;
  l.buckets = 3;
  EXPECT_THROW(l.validate(), LayoutError);
  l.buckets = 20;
  l.sbuckets_per_pair = 12;  // 8 + 48 + 12 bits
  EXPECT_THROW(l.validate(), LayoutError);
  l.sbuckets_per_pair = 11;
  EXPECT_NO_THROW(l.validate());
  l.indicator_size = 12;
  EXPECT_THROW(l.validate(), LayoutError);
}

TEST(Layout, DirectoryFollowsTable) {
  TableLayout l;
  l.base_addr = 192;
  EXPECT_EQ(l.directory_addr() % 64, 0U);
  EXPECT_GE(l.directory_addr(), l.base_addr + l.table_bytes());
  EXPECT_EQ(l.directory_bytes(), 128U);  // 10 entries rounded to a line
  EXPECT_EQ(l.extent_bytes(), l.directory_addr() + 128 - 192);
}

TEST(RootRecord, DescriptorRoundTripAndChecksum) {
  TableLayout l;
  l.base_addr = 8192;
  l.buckets = 640;
  l.sbuckets_per_pair = 5;
  auto bytes = root::encode_descriptor(l);
  auto back = root::decode_descriptor(bytes);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(*back, l);
  bytes[9] ^= 1;
  EXPECT_FALSE(root::decode_descriptor(bytes).has_value());
}

TEST(RootRecord, ControlWordPacking) {
  const root::Control c{1, true, 77};
  EXPECT_EQ(c.encode(), (77ULL << 8) | 3);
  const auto d = root::Control::decode(c.encode());
  EXPECT_EQ(d.active, 1U);
  EXPECT_TRUE(d.resizing);
  EXPECT_EQ(d.epoch, 77U);
  EXPECT_EQ(root::kMagic, 0x3154524853414843ULL);
}

TEST(KeyValue, SlotEncoding) {
  const Key k = Key::from_string("key");
  const Value v = Value::from_string("hello");
  const SlotBytes s = encode_slot(k, v);
  EXPECT_EQ(s[16], 5);
  EXPECT_EQ(s[17], 'h');
  auto d = decode_slot(s);
  ASSERT_TRUE(d.has_value());
  EXPECT_EQ(d->first, k);
  EXPECT_EQ(d->second, v);
  EXPECT_TRUE(slot_holds_key(s, k));
}

TEST(KeyValue, OversizeRejected) {
  EXPECT_THROW(Value::from_string(std::string(16, 'x')), ValidationError);
  EXPECT_NO_THROW(Value::from_string(std::string(15, 'x')));
  EXPECT_THROW(Key::from_string(std::string(17, 'x')), ValidationError);
  SlotBytes bad{};
  bad[16] = 16;
  EXPECT_FALSE(decode_slot(bad).has_value());
}

TEST(KeyValue, IdKeysAreSixteenBytes) {
  EXPECT_EQ(Key::from_id(42).to_string(), "k000000000000042");
}

}  // namespace
}  // namespace chash
