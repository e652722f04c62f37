#include "chash/root.hpp"

#include <cstring>

#include "chash/hash.hpp"

namespace chash::root {

DescriptorBytes encode_descriptor(const TableLayout& layout) {
  DescriptorBytes out{};
  std::memcpy(out.data(), &layout.base_addr, 8);
  std::memcpy(out.data() + 8, &layout.buckets, 8);
  std::memcpy(out.data() + 16, &layout.sbuckets_per_pair, 4);
  std::memcpy(out.data() + 20, &layout.indicator_size, 4);
  const std::uint64_t check = fnv1a64(std::span(out).first(24));
  std::memcpy(out.data() + 24, &check, 8);
  return out;
}

std::optional<TableLayout> decode_descriptor(
    std::span<const std::uint8_t, kDescriptorBytes> bytes) {
  std::uint64_t check = 0;
  std::memcpy(&check, bytes.data() + 24, 8);
  if (check != fnv1a64(bytes.first(24))) return std::nullopt;
  TableLayout layout;
  std::memcpy(&layout.base_addr, bytes.data(), 8);
  std::memcpy(&layout.buckets, bytes.data() + 8, 8);
  std::memcpy(&layout.sbuckets_per_pair, bytes.data() + 16, 4);
  std::memcpy(&layout.indicator_size, bytes.data() + 20, 4);
  return layout;
}

}  // namespace chash::root
