#include "chash/slot_lock.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>
#include <thread>
#include <utility>

namespace chash {

namespace {

std::atomic<std::uint64_t> g_violations{0};
std::atomic<std::uint32_t> g_next_token{1};

std::uint32_t my_token() noexcept {
  thread_local const std::uint32_t token =
      g_next_token.fetch_add(1, std::memory_order_relaxed);
  return token;
}

// Locks currently held by this thread.
struct HeldLock {
  const SlotLockTable* table;
  std::size_t index;
};
constexpr std::size_t kMaxHeld = 8;
thread_local std::array<HeldLock, kMaxHeld> t_held{};
thread_local std::size_t t_held_count = 0;

}  // namespace

std::uint64_t lock_violations() noexcept {
  return g_violations.load(std::memory_order_relaxed);
}

void note_lock_violation() noexcept {
  g_violations.fetch_add(1, std::memory_order_relaxed);
  assert(false && "slot lock protocol violated");
}

SlotLockTable::SlotLockTable(std::size_t count)
    : owners_(std::make_unique<std::atomic<std::uint32_t>[]>(count)),
      count_(count) {}

void SlotLockTable::lock(std::size_t index) {
  if (index >= count_) throw std::out_of_range("slot lock index");
  for (std::size_t i = 0; i < t_held_count; ++i) {
    if (t_held[i].table == this && t_held[i].index >= index) {
      note_lock_violation();
    }
  }
  const std::uint32_t me = my_token();
  unsigned spins = 0;
  for (;;) {
    std::uint32_t expected = 0;
    if (owners_[index].compare_exchange_weak(expected, me,
                                             std::memory_order_acquire,
                                             std::memory_order_relaxed)) {
      break;
    }
    if (++spins >= 8) {
      std::this_thread::yield();
      spins = 0;
    }
  }
  if (t_held_count < kMaxHeld) t_held[t_held_count++] = {this, index};
}

void SlotLockTable::unlock(std::size_t index) noexcept {
  if (owners_[index].load(std::memory_order_relaxed) != my_token()) {
    note_lock_violation();
  }
  owners_[index].store(0, std::memory_order_release);
  for (std::size_t i = 0; i < t_held_count; ++i) {
    if (t_held[i].table == this && t_held[i].index == index) {
      t_held[i] = t_held[--t_held_count];
      break;
    }
  }
}

bool SlotLockTable::held_by_me(std::size_t index) const noexcept {
  return index < count_ &&
         owners_[index].load(std::memory_order_relaxed) == my_token();
}

SlotLockGuard::SlotLockGuard(SlotLockTable& table, std::size_t index)
    : table_(table), held_{index, 0}, count_(1) {
  table_.lock(index);
}

SlotLockGuard::SlotLockGuard(SlotLockTable& table, std::size_t a,
                             std::size_t b)
    : table_(table) {
  if (a > b) std::swap(a, b);
  held_ = {a, b};
  count_ = a == b ? 1 : 2;
  table_.lock(held_[0]);
  if (count_ == 2) table_.lock(held_[1]);
}

SlotLockGuard::~SlotLockGuard() {
  for (std::size_t i = count_; i-- > 0;) table_.unlock(held_[i]);
}

}  // namespace chash
