#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <vector>

#include "chash/hash.hpp"
#include "chash/key_value.hpp"
#include "chash/layout.hpp"
#include "chash/pm_region.hpp"
#include "chash/slot_lock.hpp"

namespace chash {

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AllocationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class InsertOutcome { kInserted, kDuplicate, kNeedsResize };
enum class DeleteOutcome { kDeleted, kNotFound };
enum class UpdateOutcome { kUpdated, kNotFound, kNeedsResize };
enum class AddGroupOutcome {
  kAdded,
  kAlreadyAdded,
  kQuotaExhausted,
  kAllocationFailed
};

struct AddGroupResult {
  AddGroupOutcome outcome = AddGroupOutcome::kQuotaExhausted;
  std::uint64_t addr = 0;
};

// Fraction of segment pairs that may receive an added SBucket group per
// epoch. Kept rational so that the quota is exact.
struct AddedRatio {
  std::uint32_t num = 1;
  std::uint32_t den = 10;

  std::uint64_t quota(std::uint64_t pairs) const {
    if (den == 0) throw std::invalid_argument("added ratio denominator is 0");
    return (pairs * num + den - 1) / den;
  }
  double value() const { return den == 0 ? 0.0 : double(num) / double(den); }
};

struct TableConfig {
  std::uint64_t initial_buckets = 20;
  std::uint32_t sbuckets_per_pair = 3;
  std::uint32_t indicator_size = TableLayout::kPaddedIndicator;
  AddedRatio added_ratio{};
  HashFn hash = &default_hash;
};

struct ResizeOptions {
  // SBuckets per pair in the new table; unchanged when empty.
  std::optional<std::uint32_t> sbuckets_per_pair;
  // Runs after the new table is durably recorded and before any item moves.
  std::function<void(const TableLayout& from, const TableLayout& to)> on_start;
};

struct StoredItem {
  Key key;
  Value value;
  std::uint64_t pair = 0;
  unsigned bit = 0;
};

// Continuity hash table over a PM region.
//
// Writers on the same key are serialized by a key-stripe mutex; writers on
// different keys only contend on slot locks and on the indicator CAS. resize()
// and add_sbucket_group() are serialized with each other, and resize()
// requires that no insert, update or erase runs concurrently with it. Searches
// may run at any time except during resize().
class ContinuityTable {
 public:
  static std::unique_ptr<ContinuityTable> format(pm::PmRegion& region,
                                                 const TableConfig& config = {});
  // Reopens the table recorded in `region`, finishing an interrupted resize.
  static std::unique_ptr<ContinuityTable> recover(pm::PmRegion& region,
                                                  const TableConfig& config = {});

  ~ContinuityTable();
  ContinuityTable(const ContinuityTable&) = delete;
  ContinuityTable& operator=(const ContinuityTable&) = delete;

  std::uint64_t hash(const Key& key) const { return config_.hash(key.bytes()); }
  std::uint64_t bucket_number(const Key& key) const;
  SegmentRange segment_offset(std::uint64_t bucket) const;

  InsertOutcome insert(const Key& key, const Value& value);
  DeleteOutcome erase(const Key& key);
  UpdateOutcome update(const Key& key, const Value& value);
  std::optional<Value> search(const Key& key) const;

  AddGroupResult add_sbucket_group(std::uint64_t pair);
  // Doubles the bucket count (more than once if the items would not fit) and
  // migrates every item. Returns the new layout.
  TableLayout resize(const ResizeOptions& options = {});

  double load_factor() const;
  std::uint64_t item_count() const;
  std::uint64_t total_slots() const;
  std::uint64_t added_groups() const;
  std::uint64_t added_group_quota() const;
  // Added group address per pair, 0 for none.
  std::vector<std::uint64_t> directory() const;
  std::uint64_t added_group(std::uint64_t pair) const;
  std::uint64_t epoch() const noexcept {
    return epoch_.load(std::memory_order_acquire);
  }
  TableLayout layout() const;
  // Items in canonical order: pairs ascending, indicator bits ascending.
  std::vector<StoredItem> items() const;

  pm::PmRegion& region() noexcept { return pm_; }
  const TableConfig& config() const noexcept { return config_; }

 private:
  struct Generation;

  ContinuityTable(pm::PmRegion& region, const TableConfig& config);

  Generation& active() const;
  std::unique_ptr<Generation> make_generation(const TableLayout& layout) const;
  std::unique_ptr<Generation> load_generation(const TableLayout& layout) const;
  void initialize_media(const Generation& gen);

  std::optional<unsigned> find_key(const Generation& gen, std::uint64_t pair,
                                   const ScanOrder& order, std::uint64_t ind,
                                   std::uint64_t group, const Key& key) const;
  void write_slot(Generation& gen, std::uint64_t pair, unsigned bit,
                  std::uint64_t group, const Key& key, const Value& value);
  void change_bits(Generation& gen, std::uint64_t pair, std::uint64_t set,
                   std::uint64_t clear);

  InsertOutcome insert_in(Generation& gen, const Key& key, const Value& value,
                          std::uint64_t h);
  DeleteOutcome erase_in(Generation& gen, const Key& key, std::uint64_t h);
  UpdateOutcome update_in(Generation& gen, const Key& key, const Value& value,
                          std::uint64_t h);
  std::optional<Value> search_in(const Generation& gen, const Key& key,
                                 std::uint64_t h) const;
  AddGroupResult add_group_locked(Generation& gen, std::uint64_t pair);

  std::optional<std::uint64_t> allocate(std::uint64_t bytes) const;
  bool plan_fits(const Generation& from, const TableLayout& to) const;
  std::optional<StoredItem> read_item(const Generation& gen, std::uint64_t pair,
                                      unsigned bit) const;
  void migrate(Generation& from, Generation& to);
  void write_descriptor(unsigned slot, const TableLayout& layout);
  void write_control(unsigned active, bool resizing, std::uint64_t epoch);
  void finish_resize();

  pm::PmRegion& pm_;
  TableConfig config_;

  std::atomic<Generation*> active_{nullptr};
  std::atomic<Generation*> next_{nullptr};
  // Owns every generation ever opened so that readers holding a raw pointer
  // stay valid.
  std::vector<std::unique_ptr<Generation>> generations_;
  unsigned active_slot_ = 0;
  std::atomic<std::uint64_t> epoch_{0};

  mutable std::mutex maintenance_mu_;
  static constexpr std::size_t kStripes = 1024;
  std::unique_ptr<std::mutex[]> stripes_;
};

struct PersistedItem {
  // 0 for the active table, 1 for the table a resize is filling.
  unsigned table = 0;
  std::uint64_t pair = 0;
  unsigned bit = 0;
  std::optional<std::pair<Key, Value>> item;
};

// Items marked valid in the region's current bytes, read without recovery.
// Throws IntegrityError when the root record is unusable.
std::vector<PersistedItem> persisted_items(const pm::PmRegion& region);

}  // namespace chash
