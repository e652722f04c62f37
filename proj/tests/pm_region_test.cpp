#include "chash/pm_region.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>
#include <unistd.h>
#include <random>
#include <thread>
#include <vector>

namespace chash::pm {
namespace {

std::uint64_t word_at(const std::vector<std::uint8_t>& bytes,
                      std::uint64_t addr) {
  std::uint64_t w = 0;
  std::memcpy(&w, bytes.data() + addr, 8);
  return w;
}

TEST(PmRegion, FreshRegionReadsZero) {
  PmRegion r(4096);
  auto bytes = r.read(100, 300);
  for (auto b : bytes) EXPECT_EQ(b, 0);
}

TEST(PmRegion, ReadAfterStoreSeesStoredBytes) {
  PmRegion r(4096);
  std::vector<std::uint8_t> data(40, 0xAB);
  r.store(12, data);
  EXPECT_EQ(r.read(12, 40), data);
}

TEST(PmRegion, OutOfBoundsStoreThrows) {
  PmRegion r(256);
  std::vector<std::uint8_t> data(8, 1);
  EXPECT_THROW(r.store(250, data), BoundsError);
  EXPECT_THROW(r.read(256, 1), BoundsError);
}

TEST(PmRegion, MisalignedAtomicStoreThrows) {
  PmRegion r(256);
  EXPECT_THROW(r.atomic_store_8(3, 1), AlignmentError);
}

TEST(PmRegion, UnflushedStoreVanishesOrSurvivesPerWord) {
  PmRegion r(256);
  std::vector<std::uint8_t> data(32, 0xAB);
  r.store(0, data);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto image = r.crash(seed);
    for (std::uint64_t w = 0; w < 32; w += 8) {
      const std::uint64_t v = word_at(image.bytes, w);
      EXPECT_TRUE(v == 0 || v == 0xABABABABABABABABULL) << "seed " << seed;
    }
  }
}

TEST(PmRegion, FlushedStoreIsDurable) {
  PmRegion r(256);
  std::vector<std::uint8_t> data(32, 0xAB);
  r.store(0, data);
  r.flush_line(0);
  r.fence();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto image = r.crash(seed);
    EXPECT_TRUE(std::equal(data.begin(), data.end(), image.bytes.begin()));
  }
}

TEST(PmRegion, FlushCountsDistinctLinesTouched) {
  PmRegion r(1024);
  std::vector<std::uint8_t> data(8, 7);
  r.store(60, data);
  const auto before = r.flush_count();
  r.flush(60, data.size());
  // Oracle: the distinct 64-byte line indices covered by [60, 68).
  std::set<std::uint64_t> lines;
  for (std::uint64_t a = 60; a < 68; ++a) lines.insert(a / 64);
  EXPECT_EQ(r.flush_count() - before, lines.size());
}

TEST(PmRegion, FlushOfCleanLineStillCounts) {
  PmRegion r(1024);
  r.flush_line(128);
  EXPECT_EQ(r.flush_count(), 1U);
  EXPECT_EQ(r.persisted_bytes(), std::vector<std::uint8_t>(1024, 0));
}

TEST(PmRegion, FlushesAreAttributedToTheCurrentTag) {
  PmRegion r(1024);
  {
    ScopedOpTag tag(OpTag::kInsert);
    r.flush_line(0);
    r.flush_line(64);
  }
  {
    ScopedOpTag tag(OpTag::kDelete);
    r.flush_line(0);
  }
  r.flush_line(0);
  EXPECT_EQ(r.flush_count(OpTag::kInsert), 2U);
  EXPECT_EQ(r.flush_count(OpTag::kDelete), 1U);
  EXPECT_EQ(r.flush_count(OpTag::kNone), 1U);
  EXPECT_EQ(r.flush_count(), 4U);
}

TEST(PmRegion, AtomicWordIsNeverTornAcrossSeeds) {
  PmRegion r(256);
  r.atomic_store_8(8, 0x1111222233334444ULL);
  r.flush_line(8);
  r.fence();
  r.atomic_store_8(8, 0xFFFF);
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    auto image = r.crash(seed);
    const std::uint64_t v = word_at(image.bytes, 8);
    ASSERT_TRUE(v == 0x1111222233334444ULL || v == 0xFFFF) << "seed " << seed;
  }
}

TEST(PmRegion, CrashImageIsReproducibleFromSeed) {
  PmRegion r(4096);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    std::vector<std::uint8_t> data(24);
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    r.store(rng() % 4000, data);
  }
  auto a = r.crash(77);
  auto b = r.crash(77);
  EXPECT_EQ(a.bytes, b.bytes);
  ASSERT_EQ(a.decisions.size(), b.decisions.size());
  for (std::size_t i = 0; i < a.decisions.size(); ++i) {
    EXPECT_EQ(a.decisions[i].addr, b.decisions[i].addr);
    EXPECT_EQ(a.decisions[i].kept, b.decisions[i].kept);
  }
}

TEST(PmRegion, StoreAfterFenceImpliesEarlierFlush) {
  // store A, flush, fence, store B (unflushed): any image holding B holds A.
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    PmRegion r(512);
    std::mt19937_64 rng(seed);
    const std::uint64_t a_addr = (rng() % 16) * 8;
    const std::uint64_t b_addr = 256 + (rng() % 16) * 8;
    r.atomic_store_8(a_addr, 0xA);
    r.flush_line(a_addr);
    r.fence();
    r.atomic_store_8(b_addr, 0xB);
    auto image = r.crash(seed);
    if (word_at(image.bytes, b_addr) == 0xB) {
      ASSERT_EQ(word_at(image.bytes, a_addr), 0xAU) << "seed " << seed;
    }
  }
}

TEST(PmRegion, ReadStitchesDirtyAndCleanLines) {
  PmRegion r(1024);
  std::map<std::uint64_t, std::uint8_t> oracle;
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const std::uint64_t addr = rng() % 1000;
    const std::size_t len = 1 + rng() % 20;
    if (addr + len > 1024) continue;
    std::vector<std::uint8_t> data(len);
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    r.store(addr, data);
    for (std::size_t k = 0; k < len; ++k) oracle[addr + k] = data[k];
    if (rng() % 3 == 0) r.flush_line(rng() % 1024);
  }
  auto bytes = r.read(0, 1024);
  for (std::uint64_t a = 0; a < 1024; ++a) {
    auto it = oracle.find(a);
    EXPECT_EQ(bytes[a], it == oracle.end() ? 0 : it->second) << a;
  }
}

TEST(PmRegion, RegionReopensFromImage) {
  PmRegion r(512);
  r.atomic_store_8(64, 42);
  r.flush_line(64);
  auto image = r.crash(1);
  PmRegion reopened(image);
  EXPECT_EQ(reopened.load_8(64), 42U);
  EXPECT_FALSE(reopened.line_dirty(64));
}

TEST(PmRegion, ImageRoundTripsThroughFile) {
  PmRegion r(512);
  r.atomic_store_8(16, 0xDEADBEEF);
  r.flush_line(16);
  auto image = r.crash(3);
  const auto path = std::filesystem::temp_directory_path() /
                    ("chash_image_" + std::to_string(::getpid()) + ".bin");
  image.save(path);
  auto loaded = CrashImage::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(loaded.bytes, image.bytes);
}

TEST(PmRegion, ArmedCrashThrowsAndCapturesImage) {
  PmRegion r(512);
  r.atomic_store_8(0, 1);     // event 0
  r.flush_line(0);            // event 1
  r.arm_crash(3, 5);
  r.fence();                  // event 2
  EXPECT_THROW(r.atomic_store_8(8, 2), PowerFailure);  // event 3
  EXPECT_TRUE(r.failed());
  EXPECT_THROW(r.fence(), PowerFailure);
  auto image = r.take_crash_image();
  ASSERT_TRUE(image.has_value());
  EXPECT_EQ(word_at(image->bytes, 0), 1U);
  EXPECT_EQ(word_at(image->bytes, 8), 0U);
}

TEST(PmRegion, CompareExchangeReportsCurrentValue) {
  PmRegion r(128);
  r.atomic_store_8(0, 5);
  std::uint64_t expected = 4;
  EXPECT_FALSE(r.compare_exchange_8(0, expected, 9));
  EXPECT_EQ(expected, 5U);
  EXPECT_TRUE(r.compare_exchange_8(0, expected, 9));
  EXPECT_EQ(r.load_8(0), 9U);
}

TEST(PmRegion, SnapshotReadIsAnInstantaneousView) {
  // The writer bumps line 0 and then line 1, so at every instant line 0
  // holds either the same counter as line 1 or one more.
  PmRegion r(4096);
  std::atomic<bool> stop{false};
  std::thread writer([&] {
    for (std::uint64_t v = 1; !stop.load(); ++v) {
      r.atomic_store_8(0, v);
      r.atomic_store_8(64, v);
    }
  });
  std::array<std::uint8_t, 128> out{};
  for (int i = 0; i < 20000; ++i) {
    r.snapshot_read(0, out);
    const std::uint64_t a = word_at({out.begin(), out.end()}, 0);
    const std::uint64_t b = word_at({out.begin(), out.end()}, 64);
    ASSERT_TRUE(a == b || a == b + 1) << a << " " << b;
  }
  stop = true;
  writer.join();
}

}  // namespace
}  // namespace chash::pm
