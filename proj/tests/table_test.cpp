#include "chash/table.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <thread>

#include "chash/root.hpp"
#include "support/crash_harness.hpp"

namespace chash {
namespace {

using testing::Model;

constexpr std::size_t kCapacity = 1 << 20;

TableConfig no_groups() {
  TableConfig c;
  c.added_ratio = {0, 1};
  return c;
}

// Ids whose key hashes to one of `buckets` in a table of `n` buckets.
std::vector<Key> keys_in(const std::set<std::uint64_t>& buckets, std::uint64_t n,
                         std::size_t count, std::uint64_t start = 0) {
  std::vector<Key> out;
  for (std::uint64_t id = start; out.size() < count; ++id) {
    const Key k = Key::from_id(id);
    if (buckets.count(default_hash(k.bytes()) % n) != 0) out.push_back(k);
  }
  return out;
}

Value val(const std::string& s) { return Value::from_string(s); }

std::uint64_t first_word_hash(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0;
  std::memcpy(&h, bytes.data(), 8);
  return h;
}

Key key_with_word(std::uint64_t w) {
  std::array<std::uint8_t, kKeySize> b{};
  std::memcpy(b.data(), &w, 8);
  return Key(b);
}

TEST(Table, BucketNumberIsHashModN) {
  pm::PmRegion r(kCapacity);
  TableConfig c;
  c.hash = &first_word_hash;
  auto t = ContinuityTable::format(r, c);
  EXPECT_EQ(t->bucket_number(key_with_word(44)), 4U);
  EXPECT_EQ(t->bucket_number(key_with_word(20)), 0U);
}

TEST(Table, EmptyTable) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r);
  EXPECT_EQ(t->load_factor(), 0.0);
  EXPECT_FALSE(t->search(Key::from_id(1)).has_value());
  EXPECT_EQ(t->layout().buckets, 20U);
  EXPECT_EQ(t->total_slots(), 200U);
}

TEST(Table, InsertIntoEmptyBucketUsesFirstSlot) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r);
  const Key k = keys_in({0}, 20, 1).front();
  const auto before = r.flush_count(pm::OpTag::kInsert);
  ASSERT_EQ(t->insert(k, val("v")), InsertOutcome::kInserted);
  EXPECT_EQ(r.flush_count(pm::OpTag::kInsert) - before, 2U);
  const auto l = t->layout();
  EXPECT_EQ(r.load_8(l.indicator_addr(0)), 1U);
  SlotBytes slot{};
  r.read(l.slot_addr(0, 0), slot);
  EXPECT_TRUE(slot_holds_key(slot, k));
  EXPECT_EQ(t->load_factor(), 1.0 / 200);
}

TEST(Table, OddHomeFillsItsBucketFirstThenSBucketsInReverse) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r, no_groups());
  const auto keys = keys_in({1}, 20, 6);
  for (const auto& k : keys) ASSERT_EQ(t->insert(k, val("x")), InsertOutcome::kInserted);
  // Bits 19..16 (odd bucket) then 15, 14 (last SBucket slots).
  EXPECT_EQ(r.load_8(t->layout().indicator_addr(0)), 0xFC000ULL);
}

TEST(Table, DuplicateInsertDoesNotWrite) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r);
  const Key k = Key::from_id(5);
  ASSERT_EQ(t->insert(k, val("a")), InsertOutcome::kInserted);
  const auto flushes = r.flush_count();
  EXPECT_EQ(t->insert(k, val("b")), InsertOutcome::kDuplicate);
  EXPECT_EQ(r.flush_count(), flushes);
  EXPECT_EQ(t->search(k), val("a"));
}

TEST(Table, FullPairWithoutQuotaNeedsResize) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r, no_groups());
  const auto keys = keys_in({0, 1}, 20, 21);
  for (std::size_t i = 0; i < 20; ++i) {
    ASSERT_EQ(t->insert(keys[i], val("x")), InsertOutcome::kInserted) << i;
  }
  EXPECT_EQ(t->insert(keys[20], val("x")), InsertOutcome::kNeedsResize);
  EXPECT_EQ(t->add_sbucket_group(0).outcome, AddGroupOutcome::kQuotaExhausted);
}

TEST(Table, AddedGroupHoldsOverflowAndIsFound) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r);  // ratio 1/10 over 10 pairs
  EXPECT_EQ(t->added_group_quota(), 1U);
  const auto keys = keys_in({0, 1}, 20, 21);
  for (std::size_t i = 0; i < 20; ++i) t->insert(keys[i], val("x"));
  ASSERT_EQ(t->insert(keys[20], val("over")), InsertOutcome::kNeedsResize);

  const auto flushes = r.flush_count(pm::OpTag::kAddGroup);
  const AddGroupResult added = t->add_sbucket_group(0);
  ASSERT_EQ(added.outcome, AddGroupOutcome::kAdded);
  EXPECT_EQ(added.addr % 64, 0U);
  EXPECT_EQ(r.flush_count(pm::OpTag::kAddGroup) - flushes, 1U);
  EXPECT_EQ(t->add_sbucket_group(0).outcome, AddGroupOutcome::kAlreadyAdded);
  EXPECT_EQ(t->add_sbucket_group(3).outcome, AddGroupOutcome::kQuotaExhausted);
  EXPECT_EQ(t->directory()[0], added.addr);

  ASSERT_EQ(t->insert(keys[20], val("over")), InsertOutcome::kInserted);
  EXPECT_EQ(r.load_8(t->layout().indicator_addr(0)) >> 20 & 1U, 1U);
  EXPECT_EQ(t->search(keys[20]), val("over"));
  EXPECT_EQ(t->total_slots(), 212U);
}

TEST(Table, DeleteCountsOneFlush) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r);
  const Key k = Key::from_id(9);
  t->insert(k, val("v"));
  auto before = r.flush_count(pm::OpTag::kDelete);
  EXPECT_EQ(t->erase(k), DeleteOutcome::kDeleted);
  EXPECT_EQ(r.flush_count(pm::OpTag::kDelete) - before, 1U);
  before = r.flush_count(pm::OpTag::kDelete);
  EXPECT_EQ(t->erase(k), DeleteOutcome::kNotFound);
  EXPECT_EQ(r.flush_count(pm::OpTag::kDelete) - before, 0U);
  EXPECT_FALSE(t->search(k).has_value());
}

TEST(Table, UpdateIsOutOfPlace) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r);
  const Key k = keys_in({0}, 20, 1).front();
  t->insert(k, val("old"));
  const auto before = r.flush_count(pm::OpTag::kUpdate);
  EXPECT_EQ(t->update(k, val("new")), UpdateOutcome::kUpdated);
  EXPECT_EQ(r.flush_count(pm::OpTag::kUpdate) - before, 2U);
  EXPECT_EQ(r.load_8(t->layout().indicator_addr(0)), 0b10U);
  EXPECT_EQ(t->search(k), val("new"));
  EXPECT_EQ(t->update(Key::from_id(777777), val("z")), UpdateOutcome::kNotFound);
  EXPECT_EQ(r.flush_count(pm::OpTag::kUpdate) - before, 2U);
}

TEST(Table, UpdateInFullPairNeedsResize) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r, no_groups());
  const auto keys = keys_in({0, 1}, 20, 20);
  for (const auto& k : keys) t->insert(k, val("x"));
  EXPECT_EQ(t->update(keys[3], val("y")), UpdateOutcome::kNeedsResize);
  EXPECT_EQ(t->search(keys[3]), val("x"));
}

TEST(Table, ResizeDoublesAndResetsGroups) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r);
  Model model;
  std::mt19937_64 rng(3);
  for (std::uint64_t id = 0; id < 60; ++id) {
    testing::ScriptOp op{testing::ScriptOp::Kind::kInsert, Key::from_id(id),
                         testing::random_sealed(Key::from_id(id), rng)};
    t->insert(op.key, op.value);
    model.emplace(op.key, op.value);
  }
  ASSERT_EQ(t->add_sbucket_group(2).outcome, AddGroupOutcome::kAdded);
  const auto before = t->layout();
  bool started = false;
  ResizeOptions opts;
  opts.on_start = [&](const TableLayout& from, const TableLayout& to) {
    started = true;
    EXPECT_EQ(from, before);
    EXPECT_EQ(to.buckets, 40U);
  };
  const TableLayout after = t->resize(opts);
  EXPECT_TRUE(started);
  EXPECT_EQ(after.buckets, 40U);
  EXPECT_EQ(t->epoch(), 1U);
  EXPECT_EQ(t->added_groups(), 0U);
  EXPECT_EQ(t->added_group_quota(), 2U);
  EXPECT_EQ(*testing::contents(*t), model);
  EXPECT_EQ(r.flush_count(pm::OpTag::kInsert), 120U);
}

TEST(Table, ResizeCanChangeSBucketCount) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r);
  for (std::uint64_t id = 0; id < 50; ++id) t->insert(Key::from_id(id), val("v"));
  ResizeOptions opts;
  opts.sbuckets_per_pair = 5;
  const auto l = t->resize(opts);
  EXPECT_EQ(l.sbuckets_per_pair, 5U);
  EXPECT_EQ(t->item_count(), 50U);
  for (std::uint64_t id = 0; id < 50; ++id) {
    EXPECT_TRUE(t->search(Key::from_id(id)).has_value());
  }
}

TEST(Table, ResizeFailureLeavesTableIntact) {
  pm::PmRegion r(20000);
  auto t = ContinuityTable::format(r);
  for (std::uint64_t id = 0; id < 40; ++id) t->insert(Key::from_id(id), val("v"));
  const auto layout = t->layout();
  EXPECT_THROW(t->resize(), AllocationError);
  EXPECT_EQ(t->layout(), layout);
  EXPECT_EQ(t->item_count(), 40U);
  auto reopened = ContinuityTable::recover(r);
  EXPECT_EQ(reopened->layout(), layout);
  EXPECT_EQ(reopened->item_count(), 40U);
}

TEST(Table, ModelEquivalenceOverRandomOps) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    pm::PmRegion r(4 << 20);
    auto t = ContinuityTable::format(r);
    Model model;
    const auto script = testing::make_script(seed, 10000, 3000);
    for (std::size_t i = 0; i < script.size(); ++i) {
      testing::apply(*t, script[i]);
      testing::apply(model, script[i]);
      if (i % 997 == 0) {
        ASSERT_EQ(*testing::contents(*t), model) << "seed " << seed << " op " << i;
      }
    }
    ASSERT_EQ(*testing::contents(*t), model);
    for (std::uint64_t id = 0; id < 3000; ++id) {
      const Key k = Key::from_id(id);
      auto it = model.find(k);
      auto got = t->search(k);
      ASSERT_EQ(got.has_value(), it != model.end());
      if (got) {
        ASSERT_EQ(*got, it->second);
      }
    }
    EXPECT_GT(t->epoch(), 3U);
    EXPECT_EQ(t->item_count(), model.size());
  }
}

TEST(Table, InsertTargetIsAFunctionOfKeyAndState) {
  pm::PmRegion a(kCapacity);
  pm::PmRegion b(kCapacity);
  auto ta = ContinuityTable::format(a);
  auto tb = ContinuityTable::format(b);
  const auto script = testing::make_script(11, 500, 200);
  for (const auto& op : script) {
    testing::apply(*ta, op);
    testing::apply(*tb, op);
  }
  const auto ia = ta->items();
  const auto ib = tb->items();
  ASSERT_EQ(ia.size(), ib.size());
  for (std::size_t i = 0; i < ia.size(); ++i) {
    EXPECT_EQ(ia[i].key, ib[i].key);
    EXPECT_EQ(ia[i].pair, ib[i].pair);
    EXPECT_EQ(ia[i].bit, ib[i].bit);
  }
}

TEST(Recovery, CleanReopen) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r);
  for (std::uint64_t id = 0; id < 100; ++id) testing::apply(*t, {testing::ScriptOp::Kind::kInsert, Key::from_id(id), val("v")});
  const auto model = *testing::contents(*t);
  const auto image = r.crash(1);
  pm::PmRegion reopened(image);
  auto t2 = ContinuityTable::recover(reopened);
  EXPECT_EQ(*testing::contents(*t2), model);
  EXPECT_EQ(t2->epoch(), t->epoch());
  EXPECT_EQ(t2->layout(), t->layout());
  EXPECT_EQ(t2->directory(), t->directory());
}

TEST(Recovery, UnformattedRegionIsAnIntegrityError) {
  pm::PmRegion r(kCapacity);
  EXPECT_THROW(ContinuityTable::recover(r), IntegrityError);
}

TEST(Recovery, CorruptDescriptorIsAnIntegrityError) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r);
  std::array<std::uint8_t, 1> junk{0x5A};
  r.store(root::kDescriptorAddr[0] + 3, junk);
  EXPECT_THROW(ContinuityTable::recover(r), IntegrityError);
}

// Crashes at the event `offset` into a single op.
testing::CrashTrial crash_in_op(const testing::ScriptOp& op, std::uint64_t offset,
                                const std::vector<testing::ScriptOp>& setup) {
  pm::PmRegion r(kCapacity);
  auto t = ContinuityTable::format(r);
  Model model;
  for (const auto& s : setup) {
    testing::apply(*t, s);
    testing::apply(model, s);
  }
  testing::CrashTrial trial;
  trial.before = model;
  testing::apply(model, op);
  trial.after = model;
  r.arm_crash(r.event_count() + offset, offset);
  try {
    testing::apply(*t, op);
  } catch (const pm::PowerFailure&) {
    trial.crashed = true;
    trial.image = r.take_crash_image();
  }
  return trial;
}

TEST(Recovery, InsertCrashBeforeCommitLeavesKeyAbsent) {
  const Key k = Key::from_id(1);
  // Events: slot store, slot flush, fence, indicator CAS.
  auto trial = crash_in_op({testing::ScriptOp::Kind::kInsert, k, val("v")}, 3, {});
  ASSERT_TRUE(trial.crashed);
  pm::PmRegion r(*trial.image);
  auto t = ContinuityTable::recover(r);
  EXPECT_FALSE(t->search(k).has_value());
}

TEST(Recovery, UpdateCrashBeforeCommitKeepsOldValue) {
  const Key k = Key::from_id(1);
  auto trial = crash_in_op({testing::ScriptOp::Kind::kUpdate, k, val("new")}, 3,
                           {{testing::ScriptOp::Kind::kInsert, k, val("old")}});
  ASSERT_TRUE(trial.crashed);
  pm::PmRegion r(*trial.image);
  auto t = ContinuityTable::recover(r);
  EXPECT_EQ(t->search(k), val("old"));
}

TEST(Recovery, EveryCrashPointOfSingleOpsIsAtomic) {
  const Key k = Key::from_id(1);
  std::mt19937_64 rng(8);
  const std::vector<testing::ScriptOp> setup = {
      {testing::ScriptOp::Kind::kInsert, k, testing::random_sealed(k, rng)},
      {testing::ScriptOp::Kind::kInsert, Key::from_id(2),
       testing::random_sealed(Key::from_id(2), rng)}};
  for (auto kind : {testing::ScriptOp::Kind::kInsert, testing::ScriptOp::Kind::kUpdate,
                    testing::ScriptOp::Kind::kErase}) {
    const Key target = kind == testing::ScriptOp::Kind::kInsert ? Key::from_id(3) : k;
    for (std::uint64_t offset = 0; offset < 8; ++offset) {
      auto trial = crash_in_op({kind, target, testing::random_sealed(target, rng)},
                               offset, setup);
      if (!trial.crashed) break;
      for (std::uint64_t seed = 0; seed < 8; ++seed) {
        pm::PmRegion live(*trial.image);
        auto image = live.crash(seed);
        std::string why;
        EXPECT_TRUE(testing::check_recovered(image, {}, trial.before,
                                             trial.after, &why))
            << why;
      }
    }
  }
}

TEST(Recovery, ExhaustiveCrashSweepAcrossResizes) {
  TableConfig config;
  const auto script = testing::make_script(21, 400, 1000);
  const auto events = testing::script_events(config, script, kCapacity);
  std::size_t mid_resize = 0;
  for (std::uint64_t offset = 0; offset < events; ++offset) {
    auto trial = testing::run_crash_trial(config, script, offset, offset * 31 + 7,
                                          kCapacity);
    ASSERT_TRUE(trial.crashed) << offset;
    ASSERT_TRUE(trial.ok) << "offset " << offset << ": " << trial.error;
    mid_resize += trial.mid_resize;
  }
  EXPECT_GT(mid_resize, 0U);
}

TEST(Recovery, CrashDuringRecoveryIsIdempotent) {
  TableConfig config;
  const auto script = testing::make_script(5, 400, 1000);
  const auto events = testing::script_events(config, script, kCapacity);
  std::size_t nested = 0;
  for (std::uint64_t offset = 0; offset < events && nested < 40; offset += 7) {
    auto trial = testing::run_crash_trial(config, script, offset, offset, kCapacity);
    if (!trial.mid_resize) continue;
    ASSERT_TRUE(trial.ok) << trial.error;

    pm::PmRegion clean(*trial.image);
    const auto expected = *testing::contents(*ContinuityTable::recover(clean, config));

    for (std::uint64_t inner = 0;; inner += 5) {
      pm::PmRegion first(*trial.image);
      first.arm_crash(inner, inner + 1);
      try {
        ContinuityTable::recover(first, config);
        break;  // recovery finished before the crash point
      } catch (const pm::PowerFailure&) {
      }
      auto image = first.take_crash_image();
      ASSERT_TRUE(image.has_value());
      pm::PmRegion second(*image);
      auto table = ContinuityTable::recover(second, config);
      ASSERT_EQ(*testing::contents(*table), expected)
          << "outer " << offset << " inner " << inner;
      ++nested;
    }
  }
  EXPECT_GT(nested, 0U);
}

TEST(Concurrency, DisjointWritersKeepEveryKey) {
  pm::PmRegion r(16 << 20);
  TableConfig config;
  config.initial_buckets = 4096;
  auto t = ContinuityTable::format(r, config);
  const auto violations = lock_violations();
  constexpr int kThreads = 4;
  constexpr std::uint64_t kPerThread = 2000;
  std::vector<std::thread> threads;
  for (int w = 0; w < kThreads; ++w) {
    threads.emplace_back([&, w] {
      for (std::uint64_t i = 0; i < kPerThread; ++i) {
        const Key k = Key::from_id(w * kPerThread + i);
        ASSERT_NE(t->insert(k, val("a")), InsertOutcome::kNeedsResize);
        ASSERT_EQ(t->update(k, val("b")), UpdateOutcome::kUpdated);
        if (i % 3 == 0) {
          ASSERT_EQ(t->erase(k), DeleteOutcome::kDeleted);
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(lock_violations(), violations);
  for (int w = 0; w < kThreads; ++w) {
    for (std::uint64_t i = 0; i < kPerThread; ++i) {
      auto got = t->search(Key::from_id(w * kPerThread + i));
      if (i % 3 == 0) {
        EXPECT_FALSE(got.has_value());
      } else {
        EXPECT_EQ(got, val("b"));
      }
    }
  }
}

TEST(Concurrency, SameKeyWritersStaySingleHome) {
  pm::PmRegion r(4 << 20);
  auto t = ContinuityTable::format(r);
  const Key k = Key::from_id(1);
  t->insert(k, val("0"));
  std::vector<std::thread> threads;
  for (int w = 0; w < 4; ++w) {
    threads.emplace_back([&, w] {
      for (int i = 0; i < 500; ++i) {
        t->update(k, val(std::to_string(w)));
        if (i % 50 == 0) {
          t->erase(k);
          t->insert(k, val("r"));
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  std::string why;
  EXPECT_TRUE(testing::contents(*t, &why).has_value()) << why;
  EXPECT_TRUE(t->search(k).has_value());
}

}  // namespace
}  // namespace chash
