#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>

namespace chash {

// One spinlock per slot. A thread may hold several locks of one table only
// if it acquired them in ascending index order; out-of-order acquisition is
// counted (and asserts in debug builds).
class SlotLockTable {
 public:
  explicit SlotLockTable(std::size_t count);

  std::size_t size() const noexcept { return count_; }
  void lock(std::size_t index);
  void unlock(std::size_t index) noexcept;
  bool held_by_me(std::size_t index) const noexcept;

 private:
  std::unique_ptr<std::atomic<std::uint32_t>[]> owners_;
  std::size_t count_;
};

// Locks one or two slots in ascending order.
class SlotLockGuard {
 public:
  SlotLockGuard(SlotLockTable& table, std::size_t index);
  SlotLockGuard(SlotLockTable& table, std::size_t a, std::size_t b);
  ~SlotLockGuard();
  SlotLockGuard(const SlotLockGuard&) = delete;
  SlotLockGuard& operator=(const SlotLockGuard&) = delete;

 private:
  SlotLockTable& table_;
  std::array<std::size_t, 2> held_{};
  std::size_t count_ = 0;
};

// Lock-order and ownership violations seen by this process.
std::uint64_t lock_violations() noexcept;
void note_lock_violation() noexcept;

}  // namespace chash
