#include "chash/key_value.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>

#include "chash/hash.hpp"

namespace chash {

Key::Key(std::span<const std::uint8_t, kKeySize> bytes) {
  std::copy(bytes.begin(), bytes.end(), bytes_.begin());
}

Key Key::from_string(std::string_view text) {
  if (text.size() > kKeySize) {
    throw ValidationError("key longer than 16 bytes");
  }
  Key key;
  std::memcpy(key.bytes_.data(), text.data(), text.size());
  return key;
}

Key Key::from_id(std::uint64_t id) {
  char buf[kKeySize + 1];
  std::snprintf(buf, sizeof(buf), "k%015llu",
                static_cast<unsigned long long>(id % 1000000000000000ULL));
  return from_string(std::string_view(buf, kKeySize));
}

std::string Key::to_string() const {
  auto end = std::find(bytes_.begin(), bytes_.end(), std::uint8_t{0});
  return std::string(bytes_.begin(), end);
}

Value::Value(std::span<const std::uint8_t> bytes) {
  if (bytes.size() > kMaxValueSize) {
    throw ValidationError("value of " + std::to_string(bytes.size()) +
                          " bytes exceeds the 15-byte limit");
  }
  std::copy(bytes.begin(), bytes.end(), data_.begin());
  size_ = static_cast<std::uint8_t>(bytes.size());
}

Value Value::from_string(std::string_view text) {
  return Value(std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                         text.size()));
}

std::string Value::to_string() const {
  return std::string(data_.begin(), data_.begin() + size_);
}

SlotBytes encode_slot(const Key& key, const Value& value) {
  SlotBytes slot{};
  auto kb = key.bytes();
  std::copy(kb.begin(), kb.end(), slot.begin());
  slot[kKeySize] = static_cast<std::uint8_t>(value.size());
  auto vb = value.bytes();
  std::copy(vb.begin(), vb.end(), slot.begin() + kKeySize + 1);
  return slot;
}

std::optional<std::pair<Key, Value>> decode_slot(
    std::span<const std::uint8_t, kSlotSize> slot) {
  const std::size_t len = slot[kKeySize];
  if (len > kMaxValueSize) return std::nullopt;
  Key key(slot.first<kKeySize>());
  Value value(slot.subspan(kKeySize + 1, len));
  return std::pair{key, value};
}

bool slot_holds_key(std::span<const std::uint8_t, kSlotSize> slot,
                    const Key& key) noexcept {
  return std::equal(key.bytes().begin(), key.bytes().end(), slot.begin());
}

namespace {

constexpr std::size_t kSealBytes = 4;

std::uint64_t seal_of(const Key& key, std::span<const std::uint8_t> body,
                      std::size_t length) {
  std::uint64_t h = fnv1a64(key.bytes());
  const std::uint8_t len = static_cast<std::uint8_t>(length);
  h = fnv1a64(std::span(&len, 1), h);
  return fnv1a64(body, h);
}

}  // namespace

Value make_sealed_value(const Key& key, std::span<const std::uint8_t> payload,
                        std::size_t length) {
  if (length == 0 || length > kMaxValueSize) {
    throw ValidationError("sealed value length must be in [1, 15]");
  }
  const std::size_t tail = std::min(length, kSealBytes);
  const std::size_t body = length - tail;
  std::array<std::uint8_t, kMaxValueSize> bytes{};
  std::copy_n(payload.begin(), std::min(body, payload.size()), bytes.begin());
  const std::uint64_t h = seal_of(key, std::span(bytes).first(body), length);
  std::memcpy(bytes.data() + body, &h, tail);
  return Value(std::span(bytes).first(length));
}

bool is_sealed(const Key& key, const Value& value) noexcept {
  const std::size_t length = value.size();
  if (length == 0) return false;
  const std::size_t tail = std::min(length, kSealBytes);
  const std::size_t body = length - tail;
  const std::uint64_t h = seal_of(key, value.bytes().first(body), length);
  return std::memcmp(value.bytes().data() + body, &h, tail) == 0;
}

}  // namespace chash
