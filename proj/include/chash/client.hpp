#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "chash/hash.hpp"
#include "chash/key_value.hpp"
#include "chash/layout.hpp"
#include "chash/protocol.hpp"
#include "chash/transport.hpp"

namespace chash {

// Client-side segment arithmetic, computed from connection metadata only.
std::uint64_t client_segment_offset(const TableMeta& meta, std::uint64_t bucket);

struct SegmentEntry {
  unsigned bit = 0;
  Key key;
  Value value;
};

// One fetched segment decoded through its indicator.
struct SegmentView {
  std::uint64_t indicator = 0;
  Parity parity = Parity::kEven;
  // Valid slots that lie in this segment, in slot order.
  std::vector<SegmentEntry> entries;
  // Indicator bits of the pair's added group.
  std::uint64_t added_bits = 0;

  static SegmentView decode(const TableMeta& meta, std::uint64_t bucket,
                            std::span<const std::uint8_t> bytes);
  std::optional<Value> find(const Key& key) const;
};

enum class PutMode { kInsert, kUpdate };

struct ClientOptions {
  HashFn hash = &default_hash;
  std::chrono::milliseconds timeout{5000};
  // Bound on metadata-change retries of a single get.
  unsigned max_attempts = 64;
};

// Single-threaded client handle.
class Client {
 public:
  Client(Fabric& fabric, std::uint32_t client_id, ClientOptions options = {});

  std::optional<Value> get(const Key& key);
  Status put(const Key& key, const Value& value, PutMode mode);
  Status remove(const Key& key);

  Endpoint& endpoint() noexcept { return endpoint_; }
  const Endpoint& endpoint() const noexcept { return endpoint_; }
  // One-sided reads issued by the most recent get.
  unsigned last_get_reads() const noexcept { return last_get_reads_; }
  // Gets that restarted because the metadata changed underneath them.
  std::uint64_t stale_retries() const noexcept { return stale_retries_; }
  std::shared_ptr<const ConnectionMeta> meta();

 private:
  std::optional<Value> lookup(const ConnectionMeta& meta, const TableMeta& table,
                              const Key& key, std::uint64_t h);
  Status call(Opcode op, const Key& key, const Value& value, RtTag tag);

  Endpoint endpoint_;
  ClientOptions options_;
  std::shared_ptr<const ConnectionMeta> meta_;
  std::uint64_t next_request_ = 1;
  unsigned last_get_reads_ = 0;
  std::uint64_t stale_retries_ = 0;
  std::vector<std::uint8_t> buffer_;
};

}  // namespace chash
