#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace chash {

inline constexpr std::size_t kKeySize = 16;
inline constexpr std::size_t kMaxValueSize = 15;
inline constexpr std::size_t kSlotSize = 32;

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Fixed 16-byte key.
class Key {
 public:
  Key() = default;
  explicit Key(std::span<const std::uint8_t, kKeySize> bytes);

  // Zero-padded; longer strings are rejected.
  static Key from_string(std::string_view text);
  // Decimal id rendered as "k" followed by 15 digits.
  static Key from_id(std::uint64_t id);

  std::span<const std::uint8_t, kKeySize> bytes() const noexcept {
    return std::span<const std::uint8_t, kKeySize>(bytes_);
  }
  std::string to_string() const;

  friend auto operator<=>(const Key&, const Key&) = default;

 private:
  std::array<std::uint8_t, kKeySize> bytes_{};
};

// Inline value of at most 15 bytes.
class Value {
 public:
  Value() = default;
  explicit Value(std::span<const std::uint8_t> bytes);

  static Value from_string(std::string_view text);

  std::span<const std::uint8_t> bytes() const noexcept {
    return {data_.data(), size_};
  }
  std::size_t size() const noexcept { return size_; }
  std::string to_string() const;

  friend bool operator==(const Value& a, const Value& b) noexcept {
    return a.size_ == b.size_ && a.data_ == b.data_;
  }

 private:
  std::array<std::uint8_t, kMaxValueSize> data_{};
  std::uint8_t size_ = 0;
};

// Slot bytes: key[0,16) | value length [16] | value payload [17,32).
using SlotBytes = std::array<std::uint8_t, kSlotSize>;

SlotBytes encode_slot(const Key& key, const Value& value);
// Empty when the length byte is out of range.
std::optional<std::pair<Key, Value>> decode_slot(
    std::span<const std::uint8_t, kSlotSize> slot);
bool slot_holds_key(std::span<const std::uint8_t, kSlotSize> slot,
                    const Key& key) noexcept;

// Values whose last min(len, 4) bytes are an FNV-1a checksum of the key, the
// length and the leading payload bytes. Used to detect torn or misplaced
// slots in crash images and benchmark reads.
Value make_sealed_value(const Key& key, std::span<const std::uint8_t> payload,
                        std::size_t length);
bool is_sealed(const Key& key, const Value& value) noexcept;

}  // namespace chash
