#include "chash/table.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <string>

#include "chash/root.hpp"

namespace chash {

namespace {

constexpr std::uint64_t kLine = 64;
constexpr std::uint64_t kMaxBuckets = 1ULL << 40;

constexpr std::uint64_t round_up(std::uint64_t v, std::uint64_t to) {
  return (v + to - 1) / to * to;
}

constexpr std::uint64_t bit_of(unsigned bit) { return 1ULL << bit; }

std::optional<unsigned> first_free(const ScanOrder& order, std::uint64_t ind,
                                   bool has_group) {
  const unsigned limit = has_group ? order.total : order.segment_count;
  for (unsigned i = 0; i < limit; ++i) {
    const unsigned bit = order.bits[i];
    if ((ind & bit_of(bit)) == 0) return bit;
  }
  return std::nullopt;
}

TableLayout checked_descriptor(const pm::PmRegion& region, unsigned slot) {
  root::DescriptorBytes bytes{};
  region.read(root::kDescriptorAddr[slot], bytes);
  auto layout = root::decode_descriptor(bytes);
  if (!layout) {
    throw IntegrityError("table descriptor " + std::to_string(slot) +
                         " fails its checksum");
  }
  try {
    layout->validate();
  } catch (const LayoutError& e) {
    throw IntegrityError(std::string("table descriptor invalid: ") + e.what());
  }
  if (layout->base_addr < root::kDataStart ||
      layout->base_addr + layout->extent_bytes() > region.capacity()) {
    throw IntegrityError("table descriptor points outside the region");
  }
  return *layout;
}

root::Control checked_root(const pm::PmRegion& region) {
  if (region.capacity() < root::kDataStart ||
      region.load_8(root::kMagicAddr) != root::kMagic) {
    throw IntegrityError("region holds no formatted table");
  }
  return root::Control::decode(region.load_8(root::kControlAddr));
}

}  // namespace

struct ContinuityTable::Generation {
  Generation(const TableLayout& l, std::uint64_t q)
      : layout(l),
        directory(std::make_unique<std::atomic<std::uint64_t>[]>(l.pairs())),
        locks(l.pairs() * l.bit_count()),
        even(l.scan_order(Parity::kEven)),
        odd(l.scan_order(Parity::kOdd)),
        quota(q) {}

  const ScanOrder& order(Parity p) const {
    return p == Parity::kEven ? even : odd;
  }
  std::size_t lock_index(std::uint64_t pair, unsigned bit) const {
    return pair * layout.bit_count() + bit;
  }

  TableLayout layout;
  std::unique_ptr<std::atomic<std::uint64_t>[]> directory;
  SlotLockTable locks;
  ScanOrder even;
  ScanOrder odd;
  std::uint64_t quota;
  std::atomic<std::uint64_t> groups{0};
  std::atomic<std::uint64_t> items{0};
  // Added group addresses; guarded by maintenance_mu_.
  std::vector<std::uint64_t> group_addrs;
};

ContinuityTable::ContinuityTable(pm::PmRegion& region,
                                 const TableConfig& config)
    : pm_(region),
      config_(config),
      stripes_(std::make_unique<std::mutex[]>(kStripes)) {
  if (config_.hash == nullptr) config_.hash = &default_hash;
}

ContinuityTable::~ContinuityTable() = default;

std::unique_ptr<ContinuityTable> ContinuityTable::format(
    pm::PmRegion& region, const TableConfig& config) {
  std::unique_ptr<ContinuityTable> table(new ContinuityTable(region, config));
  pm::ScopedOpTag tag(pm::OpTag::kFormat);

  TableLayout layout;
  layout.base_addr = root::kDataStart;
  layout.buckets = config.initial_buckets;
  layout.sbuckets_per_pair = config.sbuckets_per_pair;
  layout.indicator_size = config.indicator_size;
  layout.validate();
  if (layout.base_addr + layout.extent_bytes() > region.capacity()) {
    throw AllocationError("region too small for the initial table");
  }

  // Invalidate any previous table first so that a crash mid-format is
  // detected rather than mixing old and new root fields.
  region.atomic_store_8(root::kMagicAddr, 0);
  region.flush_line(root::kMagicAddr);
  region.fence();

  auto gen = table->make_generation(layout);
  table->initialize_media(*gen);
  table->write_descriptor(0, layout);
  table->write_control(0, false, 0);
  region.atomic_store_8(root::kMagicAddr, root::kMagic);
  region.flush_line(root::kMagicAddr);
  region.fence();

  table->active_.store(gen.get(), std::memory_order_release);
  table->generations_.push_back(std::move(gen));
  return table;
}

std::unique_ptr<ContinuityTable> ContinuityTable::recover(
    pm::PmRegion& region, const TableConfig& config) {
  const root::Control control = checked_root(region);
  std::unique_ptr<ContinuityTable> table(new ContinuityTable(region, config));
  table->active_slot_ = control.active;
  table->epoch_.store(control.epoch, std::memory_order_release);

  auto from = table->load_generation(checked_descriptor(region, control.active));
  Generation* from_raw = from.get();
  table->active_.store(from_raw, std::memory_order_release);
  table->generations_.push_back(std::move(from));

  if (control.resizing) {
    auto to = table->load_generation(
        checked_descriptor(region, 1 - control.active));
    Generation* to_raw = to.get();
    table->generations_.push_back(std::move(to));
    table->next_.store(to_raw, std::memory_order_release);

    std::lock_guard lock(table->maintenance_mu_);
    pm::ScopedOpTag tag(pm::OpTag::kResize);
    // Migration resumes at the first item still valid in the old table. If
    // the crash hit after that item reached the new table, migrate() sees a
    // duplicate and only clears the old bit.
    table->migrate(*from_raw, *to_raw);
    table->finish_resize();
  }
  return table;
}

ContinuityTable::Generation& ContinuityTable::active() const {
  return *active_.load(std::memory_order_acquire);
}

std::unique_ptr<ContinuityTable::Generation> ContinuityTable::make_generation(
    const TableLayout& layout) const {
  return std::make_unique<Generation>(layout,
                                      config_.added_ratio.quota(layout.pairs()));
}

std::unique_ptr<ContinuityTable::Generation> ContinuityTable::load_generation(
    const TableLayout& layout) const {
  auto gen = make_generation(layout);
  const std::uint64_t valid = layout.valid_mask();
  std::uint64_t items = 0;
  for (std::uint64_t pair = 0; pair < layout.pairs(); ++pair) {
    const std::uint64_t group = pm_.load_8(layout.directory_entry_addr(pair));
    if (group != 0) {
      if (group % kLine != 0 || group < root::kDataStart ||
          group + TableLayout::kAddedGroupBytes > pm_.capacity()) {
        throw IntegrityError("added group address out of range");
      }
      gen->directory[pair].store(group, std::memory_order_relaxed);
      gen->group_addrs.push_back(group);
    }
    const std::uint64_t ind = pm_.load_8(layout.indicator_addr(pair));
    if ((ind & ~valid) != 0) {
      throw IntegrityError("indicator has bits outside the pair");
    }
    if (group == 0 && (ind & layout.added_mask()) != 0) {
      throw IntegrityError("added slot marked valid without an added group");
    }
    items += static_cast<std::uint64_t>(std::popcount(ind));
  }
  gen->groups.store(gen->group_addrs.size(), std::memory_order_relaxed);
  gen->items.store(items, std::memory_order_relaxed);
  return gen;
}

void ContinuityTable::initialize_media(const Generation& gen) {
  const TableLayout& l = gen.layout;
  for (std::uint64_t pair = 0; pair < l.pairs(); ++pair) {
    pm_.atomic_store_8(l.indicator_addr(pair), 0);
    pm_.flush_line(l.indicator_addr(pair));
  }
  const std::vector<std::uint8_t> zeros(l.directory_bytes(), 0);
  pm_.store(l.directory_addr(), zeros);
  pm_.flush(l.directory_addr(), zeros.size());
  pm_.fence();
}

std::uint64_t ContinuityTable::bucket_number(const Key& key) const {
  return hash(key) % active().layout.buckets;
}

SegmentRange ContinuityTable::segment_offset(std::uint64_t bucket) const {
  return active().layout.segment(bucket);
}

std::optional<unsigned> ContinuityTable::find_key(
    const Generation& gen, std::uint64_t pair, const ScanOrder& order,
    std::uint64_t ind, std::uint64_t group, const Key& key) const {
  const unsigned limit = group != 0 ? order.total : order.segment_count;
  SlotBytes slot{};
  for (unsigned i = 0; i < limit; ++i) {
    const unsigned bit = order.bits[i];
    if ((ind & bit_of(bit)) == 0) continue;
    pm_.snapshot_read(gen.layout.slot_addr(pair, bit, group), slot);
    if (slot_holds_key(slot, key)) return bit;
  }
  return std::nullopt;
}

void ContinuityTable::write_slot(Generation& gen, std::uint64_t pair,
                                 unsigned bit, std::uint64_t group,
                                 const Key& key, const Value& value) {
  if (!gen.locks.held_by_me(gen.lock_index(pair, bit))) note_lock_violation();
  const std::uint64_t addr = gen.layout.slot_addr(pair, bit, group);
  const SlotBytes slot = encode_slot(key, value);
  pm_.store(addr, slot);
  pm_.flush(addr, slot.size());
  pm_.fence();
}

void ContinuityTable::change_bits(Generation& gen, std::uint64_t pair,
                                  std::uint64_t set, std::uint64_t clear) {
  for (std::uint64_t m = set | clear; m != 0; m &= m - 1) {
    const auto bit = static_cast<unsigned>(std::countr_zero(m));
    if (!gen.locks.held_by_me(gen.lock_index(pair, bit))) {
      note_lock_violation();
    }
  }
  const std::uint64_t addr = gen.layout.indicator_addr(pair);
  std::uint64_t cur = pm_.load_8(addr);
  while (!pm_.compare_exchange_8(addr, cur, (cur | set) & ~clear)) {
  }
  pm_.flush_line(addr);
  pm_.fence();
}

InsertOutcome ContinuityTable::insert_in(Generation& gen, const Key& key,
                                         const Value& value, std::uint64_t h) {
  const std::uint64_t bucket = h % gen.layout.buckets;
  const std::uint64_t pair = bucket / 2;
  const ScanOrder& order = gen.order(parity_of(bucket));
  const std::uint64_t ind_addr = gen.layout.indicator_addr(pair);
  std::lock_guard stripe(stripes_[h % kStripes]);
  for (;;) {
    const std::uint64_t ind = pm_.load_8(ind_addr);
    const std::uint64_t group =
        gen.directory[pair].load(std::memory_order_acquire);
    if (find_key(gen, pair, order, ind, group, key)) {
      return InsertOutcome::kDuplicate;
    }
    const auto target = first_free(order, ind, group != 0);
    if (!target) return InsertOutcome::kNeedsResize;
    SlotLockGuard guard(gen.locks, gen.lock_index(pair, *target));
    // Another key may have claimed the slot between the load and the lock.
    if ((pm_.load_8(ind_addr) & bit_of(*target)) != 0) continue;
    write_slot(gen, pair, *target, group, key, value);
    change_bits(gen, pair, bit_of(*target), 0);
    gen.items.fetch_add(1, std::memory_order_relaxed);
    return InsertOutcome::kInserted;
  }
}

DeleteOutcome ContinuityTable::erase_in(Generation& gen, const Key& key,
                                        std::uint64_t h) {
  const std::uint64_t bucket = h % gen.layout.buckets;
  const std::uint64_t pair = bucket / 2;
  const ScanOrder& order = gen.order(parity_of(bucket));
  std::lock_guard stripe(stripes_[h % kStripes]);
  const std::uint64_t ind = pm_.load_8(gen.layout.indicator_addr(pair));
  const std::uint64_t group =
      gen.directory[pair].load(std::memory_order_acquire);
  const auto slot = find_key(gen, pair, order, ind, group, key);
  if (!slot) return DeleteOutcome::kNotFound;
  // The stripe lock keeps this key's slot fixed.
  SlotLockGuard guard(gen.locks, gen.lock_index(pair, *slot));
  change_bits(gen, pair, 0, bit_of(*slot));
  gen.items.fetch_sub(1, std::memory_order_relaxed);
  return DeleteOutcome::kDeleted;
}

UpdateOutcome ContinuityTable::update_in(Generation& gen, const Key& key,
                                         const Value& value, std::uint64_t h) {
  const std::uint64_t bucket = h % gen.layout.buckets;
  const std::uint64_t pair = bucket / 2;
  const ScanOrder& order = gen.order(parity_of(bucket));
  const std::uint64_t ind_addr = gen.layout.indicator_addr(pair);
  std::lock_guard stripe(stripes_[h % kStripes]);
  for (;;) {
    const std::uint64_t ind = pm_.load_8(ind_addr);
    const std::uint64_t group =
        gen.directory[pair].load(std::memory_order_acquire);
    const auto old_slot = find_key(gen, pair, order, ind, group, key);
    if (!old_slot) return UpdateOutcome::kNotFound;
    // The new copy goes where an insert of the same key would, so readers
    // that probe the key's segment and group always reach it.
    const auto target = first_free(order, ind, group != 0);
    if (!target) return UpdateOutcome::kNeedsResize;
    SlotLockGuard guard(gen.locks, gen.lock_index(pair, *old_slot),
                        gen.lock_index(pair, *target));
    if ((pm_.load_8(ind_addr) & bit_of(*target)) != 0) continue;
    write_slot(gen, pair, *target, group, key, value);
    change_bits(gen, pair, bit_of(*target), bit_of(*old_slot));
    return UpdateOutcome::kUpdated;
  }
}

std::optional<Value> ContinuityTable::search_in(const Generation& gen,
                                                const Key& key,
                                                std::uint64_t h) const {
  const TableLayout& l = gen.layout;
  const std::uint64_t bucket = h % l.buckets;
  const std::uint64_t pair = bucket / 2;
  const Parity parity = parity_of(bucket);
  const ScanOrder& order = gen.order(parity);

  thread_local std::vector<std::uint8_t> segment;
  const SegmentRange range = l.segment(bucket);
  segment.resize(range.length);
  pm_.snapshot_read(range.offset, segment);

  std::uint64_t ind = 0;
  std::copy_n(segment.begin() + l.segment_indicator_offset(parity), 8,
              reinterpret_cast<std::uint8_t*>(&ind));
  auto match = [&key](std::span<const std::uint8_t, kSlotSize> slot)
      -> std::optional<Value> {
    if (!slot_holds_key(slot, key)) return std::nullopt;
    auto decoded = decode_slot(slot);
    if (!decoded) return std::nullopt;
    return decoded->second;
  };

  for (unsigned i = 0; i < order.segment_count; ++i) {
    const unsigned bit = order.bits[i];
    if ((ind & bit_of(bit)) == 0) continue;
    const std::uint64_t off = l.segment_slot_offset(parity, bit);
    if (auto v = match(std::span(segment).subspan(off).first<kSlotSize>())) {
      return v;
    }
  }

  const std::uint64_t group =
      gen.directory[pair].load(std::memory_order_acquire);
  if (group == 0 || (ind & l.added_mask()) == 0) return std::nullopt;
  std::array<std::uint8_t, TableLayout::kAddedGroupBytes> added{};
  pm_.snapshot_read(group, added);
  for (unsigned bit = l.added_first_bit(); bit < l.bit_count(); ++bit) {
    if ((ind & bit_of(bit)) == 0) continue;
    const std::size_t off = (bit - l.added_first_bit()) * kSlotSize;
    if (auto v = match(std::span(added).subspan(off).first<kSlotSize>())) {
      return v;
    }
  }
  return std::nullopt;
}

InsertOutcome ContinuityTable::insert(const Key& key, const Value& value) {
  pm::ScopedOpTag tag(pm::OpTag::kInsert);
  return insert_in(active(), key, value, hash(key));
}

DeleteOutcome ContinuityTable::erase(const Key& key) {
  pm::ScopedOpTag tag(pm::OpTag::kDelete);
  return erase_in(active(), key, hash(key));
}

UpdateOutcome ContinuityTable::update(const Key& key, const Value& value) {
  pm::ScopedOpTag tag(pm::OpTag::kUpdate);
  return update_in(active(), key, value, hash(key));
}

std::optional<Value> ContinuityTable::search(const Key& key) const {
  return search_in(active(), key, hash(key));
}

AddGroupResult ContinuityTable::add_sbucket_group(std::uint64_t pair) {
  std::lock_guard lock(maintenance_mu_);
  return add_group_locked(active(), pair);
}

AddGroupResult ContinuityTable::add_group_locked(Generation& gen,
                                                 std::uint64_t pair) {
  if (pair >= gen.layout.pairs()) {
    throw std::out_of_range("segment pair " + std::to_string(pair));
  }
  if (gen.directory[pair].load(std::memory_order_acquire) != 0) {
    return {AddGroupOutcome::kAlreadyAdded, 0};
  }
  if (gen.groups.load(std::memory_order_relaxed) >= gen.quota) {
    return {AddGroupOutcome::kQuotaExhausted, 0};
  }
  const auto addr = allocate(TableLayout::kAddedGroupBytes);
  if (!addr) return {AddGroupOutcome::kAllocationFailed, 0};

  pm::ScopedOpTag tag(pm::OpTag::kAddGroup);
  // The group's slots are governed by indicator bits that are already zero,
  // so only the directory entry needs to become durable.
  const std::uint64_t entry = gen.layout.directory_entry_addr(pair);
  pm_.atomic_store_8(entry, *addr);
  pm_.flush_line(entry);
  pm_.fence();
  gen.group_addrs.push_back(*addr);
  gen.directory[pair].store(*addr, std::memory_order_release);
  gen.groups.fetch_add(1, std::memory_order_relaxed);
  return {AddGroupOutcome::kAdded, *addr};
}

std::optional<std::uint64_t> ContinuityTable::allocate(
    std::uint64_t bytes) const {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> used;
  used.emplace_back(0, root::kDataStart);
  for (const Generation* gen : {active_.load(std::memory_order_acquire),
                                next_.load(std::memory_order_acquire)}) {
    if (gen == nullptr) continue;
    used.emplace_back(gen->layout.base_addr,
                      gen->layout.base_addr + gen->layout.extent_bytes());
    for (std::uint64_t g : gen->group_addrs) {
      used.emplace_back(g, g + TableLayout::kAddedGroupBytes);
    }
  }
  std::sort(used.begin(), used.end());
  std::uint64_t cursor = 0;
  for (const auto& [start, end] : used) {
    if (cursor + bytes <= start) return cursor;
    cursor = std::max(cursor, round_up(end, kLine));
  }
  if (cursor + bytes <= pm_.capacity()) return cursor;
  return std::nullopt;
}

std::optional<StoredItem> ContinuityTable::read_item(const Generation& gen,
                                                     std::uint64_t pair,
                                                     unsigned bit) const {
  const std::uint64_t group =
      gen.directory[pair].load(std::memory_order_acquire);
  if (bit >= gen.layout.added_first_bit() && group == 0) return std::nullopt;
  SlotBytes slot{};
  pm_.read(gen.layout.slot_addr(pair, bit, group), slot);
  auto decoded = decode_slot(slot);
  if (!decoded) return std::nullopt;
  return StoredItem{decoded->first, decoded->second, pair, bit};
}

bool ContinuityTable::plan_fits(const Generation& from,
                                const TableLayout& to) const {
  // Replays migrate() on DRAM copies of the new indicators so that a resize
  // only starts when it is known to finish.
  std::vector<std::uint64_t> masks(to.pairs(), 0);
  std::vector<std::uint8_t> has_group(to.pairs(), 0);
  std::uint64_t groups = 0;
  const std::uint64_t quota = config_.added_ratio.quota(to.pairs());
  const ScanOrder orders[2] = {to.scan_order(Parity::kEven),
                               to.scan_order(Parity::kOdd)};
  const TableLayout& fl = from.layout;
  for (std::uint64_t pair = 0; pair < fl.pairs(); ++pair) {
    std::uint64_t ind = pm_.load_8(fl.indicator_addr(pair)) & fl.valid_mask();
    for (; ind != 0; ind &= ind - 1) {
      const auto bit = static_cast<unsigned>(std::countr_zero(ind));
      const auto item = read_item(from, pair, bit);
      if (!item) throw IntegrityError("valid slot holds no decodable item");
      const std::uint64_t bucket = hash(item->key) % to.buckets;
      const std::uint64_t p = bucket / 2;
      const ScanOrder& order = orders[parity_of(bucket) == Parity::kOdd];
      auto free = first_free(order, masks[p], has_group[p] != 0);
      if (!free && has_group[p] == 0 && groups < quota) {
        has_group[p] = 1;
        ++groups;
        free = first_free(order, masks[p], true);
      }
      if (!free) return false;
      masks[p] |= bit_of(*free);
    }
  }
  return true;
}

void ContinuityTable::migrate(Generation& from, Generation& to) {
  const TableLayout& fl = from.layout;
  for (std::uint64_t pair = 0; pair < fl.pairs(); ++pair) {
    const std::uint64_t ind_addr = fl.indicator_addr(pair);
    for (;;) {
      const std::uint64_t ind = pm_.load_8(ind_addr) & fl.valid_mask();
      if (ind == 0) break;
      const auto bit = static_cast<unsigned>(std::countr_zero(ind));
      const auto item = read_item(from, pair, bit);
      if (!item) throw IntegrityError("valid slot holds no decodable item");
      const std::uint64_t h = hash(item->key);
      InsertOutcome outcome = insert_in(to, item->key, item->value, h);
      if (outcome == InsertOutcome::kNeedsResize) {
        const auto added =
            add_group_locked(to, (h % to.layout.buckets) / 2).outcome;
        if (added != AddGroupOutcome::kAdded) {
          throw AllocationError("resize target cannot hold a migrated item");
        }
        outcome = insert_in(to, item->key, item->value, h);
        if (outcome == InsertOutcome::kNeedsResize) {
          throw AllocationError("resize target cannot hold a migrated item");
        }
      }
      SlotLockGuard guard(from.locks, from.lock_index(pair, bit));
      change_bits(from, pair, 0, bit_of(bit));
      from.items.fetch_sub(1, std::memory_order_relaxed);
    }
  }
}

TableLayout ContinuityTable::resize(const ResizeOptions& options) {
  std::lock_guard lock(maintenance_mu_);
  pm::ScopedOpTag tag(pm::OpTag::kResize);
  Generation& from = active();

  TableLayout to = from.layout;
  to.base_addr = 0;
  to.buckets = from.layout.buckets * 2;
  if (options.sbuckets_per_pair) to.sbuckets_per_pair = *options.sbuckets_per_pair;
  to.validate();
  while (!plan_fits(from, to)) {
    if (to.buckets >= kMaxBuckets) {
      throw AllocationError("no table size holds the current items");
    }
    to.buckets *= 2;
  }
  const auto base = allocate(to.extent_bytes());
  if (!base) {
    throw AllocationError("region cannot hold a table of " +
                          std::to_string(to.buckets) + " buckets");
  }
  to.base_addr = *base;

  auto next = make_generation(to);
  initialize_media(*next);
  write_descriptor(1 - active_slot_, to);
  write_control(active_slot_, true, epoch());
  Generation* raw = next.get();
  generations_.push_back(std::move(next));
  next_.store(raw, std::memory_order_release);

  if (options.on_start) options.on_start(from.layout, to);
  migrate(from, *raw);
  finish_resize();
  return to;
}

void ContinuityTable::finish_resize() {
  Generation* next = next_.load(std::memory_order_acquire);
  const std::uint64_t new_epoch = epoch() + 1;
  // Single commit point: the control word flips the active descriptor.
  write_control(1 - active_slot_, false, new_epoch);
  active_slot_ = 1 - active_slot_;
  active_.store(next, std::memory_order_release);
  next_.store(nullptr, std::memory_order_release);
  epoch_.store(new_epoch, std::memory_order_release);
}

void ContinuityTable::write_descriptor(unsigned slot,
                                       const TableLayout& layout) {
  const auto bytes = root::encode_descriptor(layout);
  pm_.store(root::kDescriptorAddr[slot], bytes);
  pm_.flush(root::kDescriptorAddr[slot], bytes.size());
  pm_.fence();
}

void ContinuityTable::write_control(unsigned active, bool resizing,
                                    std::uint64_t epoch) {
  pm_.atomic_store_8(root::kControlAddr,
                     root::Control{active, resizing, epoch}.encode());
  pm_.flush_line(root::kControlAddr);
  pm_.fence();
}

double ContinuityTable::load_factor() const {
  const std::uint64_t slots = total_slots();
  return slots == 0 ? 0.0 : double(item_count()) / double(slots);
}

std::uint64_t ContinuityTable::item_count() const {
  return active().items.load(std::memory_order_relaxed);
}

std::uint64_t ContinuityTable::total_slots() const {
  const Generation& gen = active();
  return gen.layout.pairs() * gen.layout.pair_slots() +
         gen.groups.load(std::memory_order_relaxed) * TableLayout::kAddedSlots;
}

std::uint64_t ContinuityTable::added_groups() const {
  return active().groups.load(std::memory_order_relaxed);
}

std::uint64_t ContinuityTable::added_group_quota() const {
  return active().quota;
}

std::vector<std::uint64_t> ContinuityTable::directory() const {
  const Generation& gen = active();
  std::vector<std::uint64_t> out(gen.layout.pairs());
  for (std::uint64_t i = 0; i < out.size(); ++i) {
    out[i] = gen.directory[i].load(std::memory_order_acquire);
  }
  return out;
}

std::uint64_t ContinuityTable::added_group(std::uint64_t pair) const {
  const Generation& gen = active();
  if (pair >= gen.layout.pairs()) {
    throw std::out_of_range("segment pair " + std::to_string(pair));
  }
  return gen.directory[pair].load(std::memory_order_acquire);
}

TableLayout ContinuityTable::layout() const { return active().layout; }

std::vector<StoredItem> ContinuityTable::items() const {
  const Generation& gen = active();
  std::vector<StoredItem> out;
  for (std::uint64_t pair = 0; pair < gen.layout.pairs(); ++pair) {
    std::uint64_t ind = pm_.load_8(gen.layout.indicator_addr(pair));
    for (; ind != 0; ind &= ind - 1) {
      const auto bit = static_cast<unsigned>(std::countr_zero(ind));
      if (auto item = read_item(gen, pair, bit)) out.push_back(*item);
    }
  }
  return out;
}

std::vector<PersistedItem> persisted_items(const pm::PmRegion& region) {
  const root::Control control = checked_root(region);
  std::vector<PersistedItem> out;
  auto scan = [&](const TableLayout& l, unsigned table) {
    for (std::uint64_t pair = 0; pair < l.pairs(); ++pair) {
      const std::uint64_t group = region.load_8(l.directory_entry_addr(pair));
      std::uint64_t ind = region.load_8(l.indicator_addr(pair)) & l.valid_mask();
      for (; ind != 0; ind &= ind - 1) {
        const auto bit = static_cast<unsigned>(std::countr_zero(ind));
        PersistedItem item{table, pair, bit, std::nullopt};
        if (bit < l.added_first_bit() || group != 0) {
          const std::uint64_t addr = l.slot_addr(pair, bit, group);
          if (addr + kSlotSize <= region.capacity()) {
            SlotBytes slot{};
            region.read(addr, slot);
            item.item = decode_slot(slot);
          }
        }
        out.push_back(std::move(item));
      }
    }
  };
  scan(checked_descriptor(region, control.active), 0);
  if (control.resizing) scan(checked_descriptor(region, 1 - control.active), 1);
  return out;
}

}  // namespace chash
