#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace chash::pm {

inline constexpr std::size_t kWordSize = 8;
inline constexpr std::size_t kDefaultLineSize = 64;

// Label attached to stores and flushes so PM writes can be attributed to the
// logical operation that issued them.
enum class OpTag : std::uint8_t {
  kNone,
  kInsert,
  kUpdate,
  kDelete,
  kResize,
  kAddGroup,
  kFormat,
  kCount
};

std::string_view to_string(OpTag tag);

// Sets the calling thread's current tag for the lifetime of the object.
class ScopedOpTag {
 public:
  explicit ScopedOpTag(OpTag tag) noexcept;
  ~ScopedOpTag();
  ScopedOpTag(const ScopedOpTag&) = delete;
  ScopedOpTag& operator=(const ScopedOpTag&) = delete;

  static OpTag current() noexcept;

 private:
  OpTag previous_;
};

class BoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown from a mutating call once an armed crash point has been reached.
// Every later mutation on the same region throws it as well.
class PowerFailure : public std::runtime_error {
 public:
  PowerFailure() : std::runtime_error("simulated power failure") {}
};

struct WordDecision {
  std::uint64_t addr;
  bool kept;
};

// Bytes that survive a crash, plus which unflushed words were kept.
struct CrashImage {
  std::vector<std::uint8_t> bytes;
  std::vector<WordDecision> decisions;
  std::uint64_t seed = 0;

  // Flat little-endian dump of `bytes`; decisions are diagnostics only and
  // are not written.
  void save(const std::filesystem::path& path) const;
  static CrashImage load(const std::filesystem::path& path);
};

// Byte-addressable simulated persistent memory.
//
// The region keeps two word arrays: the coherent view seen by loads (what the
// CPU caches hold) and the persisted media. Stores only touch the coherent
// view and mark their cache lines dirty; flush copies a line to the media. A
// crash image starts from the media and, for every dirty line, keeps or drops
// each differing aligned 8-byte word independently. An aligned 8-byte store is
// therefore never torn.
//
// Each line carries a sequence word. Writers hold it odd while mutating the
// line, which serializes writers per line and lets snapshot_read() return a
// range that was not modified while it was copied.
class PmRegion {
 public:
  explicit PmRegion(std::size_t capacity,
                    std::size_t line_size = kDefaultLineSize);
  explicit PmRegion(const CrashImage& image,
                    std::size_t line_size = kDefaultLineSize);

  PmRegion(const PmRegion&) = delete;
  PmRegion& operator=(const PmRegion&) = delete;

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t line_size() const noexcept { return line_size_; }

  void store(std::uint64_t addr, std::span<const std::uint8_t> data);
  void atomic_store_8(std::uint64_t addr, std::uint64_t word);
  // Word-atomic compare-and-swap on the coherent view. On failure `expected`
  // receives the current value. A successful exchange is staged like
  // atomic_store_8.
  bool compare_exchange_8(std::uint64_t addr, std::uint64_t& expected,
                          std::uint64_t desired);
  std::uint64_t load_8(std::uint64_t addr) const;

  void flush_line(std::uint64_t addr);
  // Flushes every line overlapping [addr, addr + len).
  void flush(std::uint64_t addr, std::size_t len);
  void fence();

  void read(std::uint64_t addr, std::span<std::uint8_t> out) const;
  std::vector<std::uint8_t> read(std::uint64_t addr, std::size_t len) const;
  // Like read(), but the returned bytes form an atomic snapshot with respect
  // to concurrent writers on the covered lines.
  void snapshot_read(std::uint64_t addr, std::span<std::uint8_t> out) const;

  // Requires quiescent mutators.
  CrashImage crash(std::uint64_t seed) const;
  std::vector<std::uint8_t> persisted_bytes() const;
  bool line_dirty(std::uint64_t addr) const;

  // Crash injection. Events are the mutating calls (store, atomic store,
  // compare-exchange, one per flushed line, fence), numbered from zero. When
  // event `at_event` is about to run, the region captures crash(seed) and
  // throws PowerFailure instead of executing it.
  void arm_crash(std::uint64_t at_event, std::uint64_t seed);
  void disarm_crash() noexcept;
  bool failed() const noexcept {
    return failed_.load(std::memory_order_acquire);
  }
  std::optional<CrashImage> take_crash_image();
  std::uint64_t event_count() const noexcept {
    return events_.load(std::memory_order_relaxed);
  }
  OpTag failed_tag() const noexcept { return failed_tag_; }

  std::uint64_t flush_count() const noexcept;
  std::uint64_t flush_count(OpTag tag) const noexcept;
  std::uint64_t atomic_store_count() const noexcept;
  std::uint64_t atomic_store_count(OpTag tag) const noexcept;
  std::uint64_t store_count(OpTag tag) const noexcept;
  std::uint64_t fence_count() const noexcept {
    return fences_.load(std::memory_order_relaxed);
  }

 private:
  using Counters =
      std::array<std::atomic<std::uint64_t>,
                 static_cast<std::size_t>(OpTag::kCount)>;

  void check_range(std::uint64_t addr, std::size_t len) const;
  void check_aligned(std::uint64_t addr) const;
  void tick();
  std::uint32_t lock_line(std::size_t line) const;
  void unlock_line(std::size_t line, std::uint32_t seq) const;
  std::uint64_t load_word(std::size_t word) const;
  void store_word(std::size_t word, std::uint64_t value);
  void init(std::size_t capacity, std::size_t line_size);

  std::size_t capacity_ = 0;
  std::size_t line_size_ = kDefaultLineSize;
  std::size_t words_per_line_ = kDefaultLineSize / kWordSize;
  std::size_t line_count_ = 0;

  mutable std::vector<std::uint64_t> cache_;
  std::vector<std::uint64_t> media_;
  std::vector<std::uint8_t> dirty_;
  mutable std::unique_ptr<std::atomic<std::uint32_t>[]> seq_;

  std::atomic<std::uint64_t> events_{0};
  std::atomic<bool> armed_{false};
  std::atomic<bool> failed_{false};
  std::uint64_t crash_at_ = 0;
  std::uint64_t crash_seed_ = 0;
  OpTag failed_tag_ = OpTag::kNone;
  std::mutex crash_mu_;
  std::optional<CrashImage> crash_image_;

  Counters flushes_{};
  Counters atomic_stores_{};
  Counters stores_{};
  std::atomic<std::uint64_t> fences_{0};
};

}  // namespace chash::pm
