#include "chash/client.hpp"

#include <algorithm>
#include <array>
#include <cstring>

namespace chash {

namespace {

constexpr std::uint64_t kSlot = 32;
constexpr unsigned kBucketSlots = 4;
constexpr unsigned kAddedSlots = 12;

unsigned first_added_bit(const TableMeta& m) {
  return kBucketSlots * (2 + m.sbuckets_per_pair);
}

std::uint64_t added_mask(const TableMeta& m) {
  return ((1ULL << kAddedSlots) - 1) << first_added_bit(m);
}

}  // namespace

std::uint64_t client_segment_offset(const TableMeta& meta,
                                    std::uint64_t bucket) {
  if (bucket % 2 == 0) return meta.base_addr + bucket / 2 * meta.pair_stride;
  return meta.base_addr + (bucket - 1) / 2 * meta.pair_stride + meta.size_bu;
}

SegmentView SegmentView::decode(const TableMeta& meta, std::uint64_t bucket,
                                std::span<const std::uint8_t> bytes) {
  SegmentView view;
  view.parity = parity_of(bucket);
  const bool even = view.parity == Parity::kEven;
  const std::uint64_t ind_off = even ? meta.size_bu : 0;
  std::memcpy(&view.indicator, bytes.data() + ind_off, 8);

  // Even segment: home bucket, indicator, SBuckets. Odd segment: indicator,
  // SBuckets, home bucket. Bits 4.. are the SBuckets then the odd bucket.
  const unsigned shared = kBucketSlots * meta.sbuckets_per_pair;
  const unsigned lo = even ? 0 : kBucketSlots;
  const unsigned hi = lo + kBucketSlots + shared;
  for (unsigned bit = lo; bit < hi; ++bit) {
    if ((view.indicator >> bit & 1U) == 0) continue;
    std::uint64_t off = 0;
    if (even) {
      off = bit < kBucketSlots
                ? bit * kSlot
                : meta.size_bu + meta.indicator_size + (bit - kBucketSlots) * kSlot;
    } else {
      off = meta.indicator_size + (bit - kBucketSlots) * kSlot;
    }
    if (off + kSlot > bytes.size()) break;
    auto slot = bytes.subspan(off).first<kSlotSize>();
    if (auto item = decode_slot(slot)) {
      view.entries.push_back({bit, item->first, item->second});
    }
  }
  view.added_bits = view.indicator & added_mask(meta);
  return view;
}

std::optional<Value> SegmentView::find(const Key& key) const {
  for (const auto& e : entries) {
    if (e.key == key) return e.value;
  }
  return std::nullopt;
}

Client::Client(Fabric& fabric, std::uint32_t client_id, ClientOptions options)
    : endpoint_(fabric, client_id, options.timeout), options_(options) {}

std::shared_ptr<const ConnectionMeta> Client::meta() {
  if (!meta_ || meta_->version != endpoint_.fabric().meta().version()) {
    meta_ = endpoint_.fetch_meta();
    if (!meta_) {
      throw TransportError(TransportError::Kind::kDisconnected,
                           "server has not published metadata");
    }
  }
  return meta_;
}

std::optional<Value> Client::lookup(const ConnectionMeta& meta,
                                    const TableMeta& table, const Key& key,
                                    std::uint64_t h) {
  const std::uint64_t bucket = h % table.buckets;
  const std::uint64_t pair = bucket / 2;
  buffer_.resize(table.size_se);
  endpoint_.one_sided_read(RtTag::kGet, meta.region_key,
                           client_segment_offset(table, bucket), buffer_);
  ++last_get_reads_;
  const SegmentView view = SegmentView::decode(table, bucket, buffer_);
  if (auto v = view.find(key)) return v;
  if (view.added_bits == 0) return std::nullopt;

  std::uint64_t group = 0;
  if (pair < table.directory.size()) {
    group = table.directory[pair];
  } else {
    // A table under construction: its directory is only in the region.
    std::array<std::uint8_t, 8> entry{};
    endpoint_.one_sided_read(RtTag::kGet, meta.region_key,
                             table.directory_addr + pair * 8, entry);
    ++last_get_reads_;
    std::memcpy(&group, entry.data(), 8);
  }
  if (group == 0) return std::nullopt;

  std::array<std::uint8_t, kAddedSlots * kSlot> added{};
  endpoint_.one_sided_read(RtTag::kGet, meta.region_key, group, added);
  ++last_get_reads_;
  const unsigned first = first_added_bit(table);
  for (unsigned i = 0; i < kAddedSlots; ++i) {
    if ((view.added_bits >> (first + i) & 1U) == 0) continue;
    auto slot = std::span(added).subspan(i * kSlot).first<kSlotSize>();
    if (!slot_holds_key(slot, key)) continue;
    if (auto item = decode_slot(slot)) return item->second;
  }
  return std::nullopt;
}

std::optional<Value> Client::get(const Key& key) {
  const std::uint64_t h = options_.hash(key.bytes());
  last_get_reads_ = 0;
  std::optional<Value> result;
  for (unsigned attempt = 0; attempt < options_.max_attempts; ++attempt) {
    const auto m = meta();
    try {
      result = lookup(*m, m->active, key, h);
      // Mid-resize, an item not yet seen in the old table has already moved
      // to the new one (items are inserted there before leaving the old).
      if (!result && m->next) result = lookup(*m, *m->next, key, h);
    } catch (const ProtectionError&) {
      // Stale geometry pointing past the region; retried below.
      if (endpoint_.fabric().meta().version() == m->version) throw;
    }
    if (endpoint_.fabric().meta().version() == m->version) return result;
    ++stale_retries_;
  }
  return result;
}

Status Client::call(Opcode op, const Key& key, const Value& value, RtTag tag) {
  RequestFrame request;
  request.op = op;
  request.client_id = endpoint_.client_id();
  request.request_id = next_request_++;
  request.key = key;
  request.value = value;
  const CompletionFrame done = endpoint_.write_with_imm(tag, request);
  if (done.request_id != request.request_id) {
    throw TransportError(TransportError::Kind::kDisconnected,
                         "completion for a different request");
  }
  return done.status;
}

Status Client::put(const Key& key, const Value& value, PutMode mode) {
  return mode == PutMode::kInsert
             ? call(Opcode::kInsert, key, value, RtTag::kInsert)
             : call(Opcode::kUpdate, key, value, RtTag::kUpdate);
}

Status Client::remove(const Key& key) {
  return call(Opcode::kDelete, key, Value(), RtTag::kDelete);
}

}  // namespace chash
