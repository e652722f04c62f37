#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "chash/key_value.hpp"

namespace chash {

enum class Opcode : std::uint8_t { kInsert = 1, kUpdate = 2, kDelete = 3 };

enum class Status : std::uint8_t {
  kInserted = 0,
  kUpdated = 1,
  kDeleted = 2,
  kDuplicate = 3,
  kNotFound = 4,
  kFailed = 5,
  kInvalid = 6,
};

std::string_view to_string(Status status);
std::string_view to_string(Opcode op);

inline constexpr std::size_t kRequestFrameBytes = 48;
inline constexpr std::size_t kCompletionFrameBytes = 24;

// Little-endian, fixed width:
//   op u8 | value_len u8 | reserved u16 | client_id u32 | request_id u64 |
//   key[16] | value[15] | pad u8
struct RequestFrame {
  Opcode op = Opcode::kInsert;
  std::uint32_t client_id = 0;
  std::uint64_t request_id = 0;
  Key key;
  Value value;

  std::array<std::uint8_t, kRequestFrameBytes> encode() const;
  // Empty for an unknown opcode or an oversize value length.
  static std::optional<RequestFrame> decode(
      std::span<const std::uint8_t, kRequestFrameBytes> bytes);
};

//   request_id u64 | status u8 | pad[7] | epoch u64
struct CompletionFrame {
  std::uint64_t request_id = 0;
  Status status = Status::kFailed;
  std::uint64_t epoch = 0;

  std::array<std::uint8_t, kCompletionFrameBytes> encode() const;
  static CompletionFrame decode(
      std::span<const std::uint8_t, kCompletionFrameBytes> bytes);
};

// Geometry a client needs to locate segments without asking the server.
struct TableMeta {
  std::uint64_t base_addr = 0;
  std::uint64_t buckets = 0;
  std::uint32_t sbuckets_per_pair = 0;
  std::uint32_t indicator_size = 0;
  std::uint64_t size_bu = 0;
  std::uint64_t size_se = 0;
  std::uint64_t pair_stride = 0;
  std::uint64_t directory_addr = 0;
  // Added group address per pair, 0 for none. Empty for a table that is
  // still being filled by a resize; clients then read entries remotely.
  std::vector<std::uint64_t> directory;
};

struct ConnectionMeta {
  std::uint64_t version = 0;
  std::uint64_t epoch = 0;
  std::uint32_t region_key = 0;
  TableMeta active;
  // Present while a resize is migrating items into a new table.
  std::optional<TableMeta> next;
};

}  // namespace chash
