#include "chash/pm_region.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <thread>
#include <utility>

namespace chash::pm {

static_assert(std::endian::native == std::endian::little,
              "the region stores words in host order and assumes little endian");

namespace {

thread_local OpTag tls_tag = OpTag::kNone;

constexpr std::size_t index_of(OpTag tag) {
  return static_cast<std::size_t>(tag);
}

}  // namespace

std::string_view to_string(OpTag tag) {
  switch (tag) {
    case OpTag::kNone: return "none";
    case OpTag::kInsert: return "insert";
    case OpTag::kUpdate: return "update";
    case OpTag::kDelete: return "delete";
    case OpTag::kResize: return "resize";
    case OpTag::kAddGroup: return "add_group";
    case OpTag::kFormat: return "format";
    case OpTag::kCount: break;
  }
  return "unknown";
}

ScopedOpTag::ScopedOpTag(OpTag tag) noexcept : previous_(tls_tag) {
  tls_tag = tag;
}

ScopedOpTag::~ScopedOpTag() { tls_tag = previous_; }

OpTag ScopedOpTag::current() noexcept { return tls_tag; }

void CrashImage::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

CrashImage CrashImage::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CrashImage image;
  image.bytes.resize(std::filesystem::file_size(path));
  in.read(reinterpret_cast<char*>(image.bytes.data()),
          static_cast<std::streamsize>(image.bytes.size()));
  if (!in) throw std::runtime_error("short read from " + path.string());
  return image;
}

PmRegion::PmRegion(std::size_t capacity, std::size_t line_size) {
  init(capacity, line_size);
}

PmRegion::PmRegion(const CrashImage& image, std::size_t line_size) {
  init(image.bytes.size(), line_size);
  std::memcpy(cache_.data(), image.bytes.data(), image.bytes.size());
  std::memcpy(media_.data(), image.bytes.data(), image.bytes.size());
}

void PmRegion::init(std::size_t capacity, std::size_t line_size) {
  if (line_size == 0 || line_size % kWordSize != 0) {
    throw std::invalid_argument("line size must be a positive multiple of 8");
  }
  line_size_ = line_size;
  words_per_line_ = line_size / kWordSize;
  line_count_ = (capacity + line_size - 1) / line_size;
  capacity_ = line_count_ * line_size;
  cache_.assign(capacity_ / kWordSize, 0);
  media_.assign(capacity_ / kWordSize, 0);
  dirty_.assign(line_count_, 0);
  seq_ = std::make_unique<std::atomic<std::uint32_t>[]>(line_count_);
  for (std::size_t i = 0; i < line_count_; ++i) {
    seq_[i].store(0, std::memory_order_relaxed);
  }
}

void PmRegion::check_range(std::uint64_t addr, std::size_t len) const {
  if (addr > capacity_ || len > capacity_ - addr) {
    throw BoundsError("pm access [" + std::to_string(addr) + ", +" +
                      std::to_string(len) + ") exceeds capacity " +
                      std::to_string(capacity_));
  }
}

void PmRegion::check_aligned(std::uint64_t addr) const {
  if (addr % kWordSize != 0) {
    throw AlignmentError("8-byte atomic access at unaligned address " +
                         std::to_string(addr));
  }
  check_range(addr, kWordSize);
}

void PmRegion::tick() {
  if (failed_.load(std::memory_order_acquire)) throw PowerFailure();
  const auto n = events_.fetch_add(1, std::memory_order_relaxed);
  if (armed_.load(std::memory_order_relaxed) && n == crash_at_) {
    std::lock_guard guard(crash_mu_);
    crash_image_ = crash(crash_seed_);
    failed_tag_ = ScopedOpTag::current();
    armed_.store(false, std::memory_order_relaxed);
    failed_.store(true, std::memory_order_release);
    throw PowerFailure();
  }
}

std::uint32_t PmRegion::lock_line(std::size_t line) const {
  auto& seq = seq_[line];
  std::uint32_t cur = seq.load(std::memory_order_relaxed);
  for (unsigned spins = 0;; ++spins) {
    if ((cur & 1U) == 0 &&
        seq.compare_exchange_weak(cur, cur + 1, std::memory_order_acquire,
                                  std::memory_order_relaxed)) {
      std::atomic_thread_fence(std::memory_order_release);
      return cur + 1;
    }
    if (spins > 8) std::this_thread::yield();
    cur = seq.load(std::memory_order_relaxed);
  }
}

void PmRegion::unlock_line(std::size_t line, std::uint32_t seq) const {
  seq_[line].store(seq + 1, std::memory_order_release);
}

std::uint64_t PmRegion::load_word(std::size_t word) const {
  return std::atomic_ref<std::uint64_t>(cache_[word])
      .load(std::memory_order_relaxed);
}

void PmRegion::store_word(std::size_t word, std::uint64_t value) {
  std::atomic_ref<std::uint64_t>(cache_[word])
      .store(value, std::memory_order_relaxed);
}

void PmRegion::store(std::uint64_t addr, std::span<const std::uint8_t> data) {
  check_range(addr, data.size());
  tick();
  stores_[index_of(tls_tag)].fetch_add(1, std::memory_order_relaxed);

  std::size_t pos = 0;
  while (pos < data.size()) {
    const std::uint64_t at = addr + pos;
    const std::size_t line = at / line_size_;
    const std::size_t line_end = (line + 1) * line_size_;
    const std::size_t chunk = std::min(data.size() - pos, line_end - at);

    const auto seq = lock_line(line);
    std::size_t done = 0;
    while (done < chunk) {
      const std::uint64_t a = at + done;
      const std::size_t word = a / kWordSize;
      const std::size_t offset = a % kWordSize;
      const std::size_t n = std::min(kWordSize - offset, chunk - done);
      std::uint64_t value = load_word(word);
      std::memcpy(reinterpret_cast<std::uint8_t*>(&value) + offset,
                  data.data() + pos + done, n);
      store_word(word, value);
      done += n;
    }
    dirty_[line] = 1;
    unlock_line(line, seq);
    pos += chunk;
  }
}

void PmRegion::atomic_store_8(std::uint64_t addr, std::uint64_t word) {
  check_aligned(addr);
  tick();
  const std::size_t line = addr / line_size_;
  const auto seq = lock_line(line);
  store_word(addr / kWordSize, word);
  dirty_[line] = 1;
  unlock_line(line, seq);
  atomic_stores_[index_of(tls_tag)].fetch_add(1, std::memory_order_relaxed);
}

bool PmRegion::compare_exchange_8(std::uint64_t addr, std::uint64_t& expected,
                                  std::uint64_t desired) {
  check_aligned(addr);
  tick();
  const std::size_t line = addr / line_size_;
  const auto seq = lock_line(line);
  const std::uint64_t current = load_word(addr / kWordSize);
  const bool swapped = current == expected;
  if (swapped) {
    store_word(addr / kWordSize, desired);
    dirty_[line] = 1;
  } else {
    expected = current;
  }
  unlock_line(line, seq);
  if (swapped) {
    atomic_stores_[index_of(tls_tag)].fetch_add(1, std::memory_order_relaxed);
  }
  return swapped;
}

std::uint64_t PmRegion::load_8(std::uint64_t addr) const {
  check_aligned(addr);
  return std::atomic_ref<std::uint64_t>(cache_[addr / kWordSize])
      .load(std::memory_order_acquire);
}

void PmRegion::flush_line(std::uint64_t addr) { flush(addr, 1); }

void PmRegion::flush(std::uint64_t addr, std::size_t len) {
  check_range(addr, std::max<std::size_t>(len, 1));
  const std::size_t first = addr / line_size_;
  const std::size_t last = (addr + std::max<std::size_t>(len, 1) - 1) / line_size_;
  for (std::size_t line = first; line <= last; ++line) {
    tick();
    const auto seq = lock_line(line);
    const std::size_t w0 = line * words_per_line_;
    for (std::size_t w = w0; w < w0 + words_per_line_; ++w) {
      media_[w] = load_word(w);
    }
    dirty_[line] = 0;
    unlock_line(line, seq);
    flushes_[index_of(tls_tag)].fetch_add(1, std::memory_order_relaxed);
  }
}

void PmRegion::fence() {
  tick();
  fences_.fetch_add(1, std::memory_order_relaxed);
  std::atomic_thread_fence(std::memory_order_seq_cst);
}

void PmRegion::read(std::uint64_t addr, std::span<std::uint8_t> out) const {
  check_range(addr, out.size());
  std::size_t pos = 0;
  while (pos < out.size()) {
    const std::uint64_t a = addr + pos;
    const std::size_t offset = a % kWordSize;
    const std::size_t n = std::min(kWordSize - offset, out.size() - pos);
    const std::uint64_t value = load_word(a / kWordSize);
    std::memcpy(out.data() + pos,
                reinterpret_cast<const std::uint8_t*>(&value) + offset, n);
    pos += n;
  }
}

std::vector<std::uint8_t> PmRegion::read(std::uint64_t addr,
                                         std::size_t len) const {
  std::vector<std::uint8_t> out(len);
  read(addr, out);
  return out;
}

void PmRegion::snapshot_read(std::uint64_t addr,
                             std::span<std::uint8_t> out) const {
  check_range(addr, out.size());
  if (out.empty()) return;
  const std::size_t first = addr / line_size_;
  const std::size_t count = (addr + out.size() - 1) / line_size_ - first + 1;

  // Segments span a handful of lines; avoid a heap allocation for them.
  std::array<std::uint32_t, 32> small{};
  std::vector<std::uint32_t> large;
  std::uint32_t* before = small.data();
  if (count > small.size()) {
    large.resize(count);
    before = large.data();
  }
  for (unsigned attempt = 0;; ++attempt) {
    if (attempt > 4) std::this_thread::yield();
    bool busy = false;
    for (std::size_t i = 0; i < count; ++i) {
      before[i] = seq_[first + i].load(std::memory_order_acquire);
      busy |= (before[i] & 1U) != 0;
    }
    if (busy) continue;
    read(addr, out);
    std::atomic_thread_fence(std::memory_order_acquire);
    bool stable = true;
    for (std::size_t i = 0; i < count && stable; ++i) {
      stable = seq_[first + i].load(std::memory_order_relaxed) == before[i];
    }
    if (stable) return;
  }
}

CrashImage PmRegion::crash(std::uint64_t seed) const {
  CrashImage image;
  image.seed = seed;
  image.bytes.resize(capacity_);
  std::memcpy(image.bytes.data(), media_.data(), capacity_);

  std::mt19937_64 rng(seed);
  for (std::size_t line = 0; line < line_count_; ++line) {
    if (dirty_[line] == 0) continue;
    const std::size_t w0 = line * words_per_line_;
    for (std::size_t w = w0; w < w0 + words_per_line_; ++w) {
      const std::uint64_t cached = load_word(w);
      if (cached == media_[w]) continue;
      const bool kept = (rng() >> 63) != 0;
      if (kept) {
        std::memcpy(image.bytes.data() + w * kWordSize, &cached, kWordSize);
      }
      image.decisions.push_back({w * kWordSize, kept});
    }
  }
  return image;
}

std::vector<std::uint8_t> PmRegion::persisted_bytes() const {
  std::vector<std::uint8_t> out(capacity_);
  std::memcpy(out.data(), media_.data(), capacity_);
  return out;
}

bool PmRegion::line_dirty(std::uint64_t addr) const {
  check_range(addr, 1);
  return dirty_[addr / line_size_] != 0;
}

void PmRegion::arm_crash(std::uint64_t at_event, std::uint64_t seed) {
  std::lock_guard guard(crash_mu_);
  crash_at_ = at_event;
  crash_seed_ = seed;
  crash_image_.reset();
  armed_.store(true, std::memory_order_release);
}

void PmRegion::disarm_crash() noexcept {
  armed_.store(false, std::memory_order_release);
}

std::optional<CrashImage> PmRegion::take_crash_image() {
  std::lock_guard guard(crash_mu_);
  return std::exchange(crash_image_, std::nullopt);
}

std::uint64_t PmRegion::flush_count() const noexcept {
  std::uint64_t total = 0;
  for (const auto& c : flushes_) total += c.load(std::memory_order_relaxed);
  return total;
}

std::uint64_t PmRegion::flush_count(OpTag tag) const noexcept {
  return flushes_[index_of(tag)].load(std::memory_order_relaxed);
}

std::uint64_t PmRegion::atomic_store_count() const noexcept {
  std::uint64_t total = 0;
  for (const auto& c : atomic_stores_) total += c.load(std::memory_order_relaxed);
  return total;
}

std::uint64_t PmRegion::atomic_store_count(OpTag tag) const noexcept {
  return atomic_stores_[index_of(tag)].load(std::memory_order_relaxed);
}

std::uint64_t PmRegion::store_count(OpTag tag) const noexcept {
  return stores_[index_of(tag)].load(std::memory_order_relaxed);
}

}  // namespace chash::pm
