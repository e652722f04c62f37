#include "chash/protocol.hpp"

#include <algorithm>
#include <cstring>

namespace chash {

std::string_view to_string(Status status) {
  switch (status) {
    case Status::kInserted: return "inserted";
    case Status::kUpdated: return "updated";
    case Status::kDeleted: return "deleted";
    case Status::kDuplicate: return "duplicate";
    case Status::kNotFound: return "not_found";
    case Status::kFailed: return "failed";
    case Status::kInvalid: return "invalid";
  }
  return "unknown";
}

std::string_view to_string(Opcode op) {
  switch (op) {
    case Opcode::kInsert: return "insert";
    case Opcode::kUpdate: return "update";
    case Opcode::kDelete: return "delete";
  }
  return "unknown";
}

std::array<std::uint8_t, kRequestFrameBytes> RequestFrame::encode() const {
  std::array<std::uint8_t, kRequestFrameBytes> out{};
  out[0] = static_cast<std::uint8_t>(op);
  out[1] = static_cast<std::uint8_t>(value.size());
  std::memcpy(out.data() + 4, &client_id, 4);
  std::memcpy(out.data() + 8, &request_id, 8);
  std::copy(key.bytes().begin(), key.bytes().end(), out.begin() + 16);
  std::copy(value.bytes().begin(), value.bytes().end(), out.begin() + 32);
  return out;
}

std::optional<RequestFrame> RequestFrame::decode(
    std::span<const std::uint8_t, kRequestFrameBytes> bytes) {
  if (bytes[0] < 1 || bytes[0] > 3 || bytes[1] > kMaxValueSize) {
    return std::nullopt;
  }
  RequestFrame f;
  f.op = static_cast<Opcode>(bytes[0]);
  std::memcpy(&f.client_id, bytes.data() + 4, 4);
  std::memcpy(&f.request_id, bytes.data() + 8, 8);
  f.key = Key(bytes.subspan<16, kKeySize>());
  f.value = Value(bytes.subspan(32, bytes[1]));
  return f;
}

std::array<std::uint8_t, kCompletionFrameBytes> CompletionFrame::encode()
    const {
  std::array<std::uint8_t, kCompletionFrameBytes> out{};
  std::memcpy(out.data(), &request_id, 8);
  out[8] = static_cast<std::uint8_t>(status);
  std::memcpy(out.data() + 16, &epoch, 8);
  return out;
}

CompletionFrame CompletionFrame::decode(
    std::span<const std::uint8_t, kCompletionFrameBytes> bytes) {
  CompletionFrame f;
  std::memcpy(&f.request_id, bytes.data(), 8);
  f.status = bytes[8] <= static_cast<std::uint8_t>(Status::kInvalid)
                 ? static_cast<Status>(bytes[8])
                 : Status::kInvalid;
  std::memcpy(&f.epoch, bytes.data() + 16, 8);
  return f;
}

}  // namespace chash
