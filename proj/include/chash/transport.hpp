#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "chash/pm_region.hpp"
#include "chash/protocol.hpp"

namespace chash {

class TransportError : public std::runtime_error {
 public:
  enum class Kind { kTimeout, kDisconnected, kProtection };
  TransportError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ProtectionError : public TransportError {
 public:
  explicit ProtectionError(const std::string& what)
      : TransportError(Kind::kProtection, what) {}
};

// Operation a round trip is charged to.
enum class RtTag : std::uint8_t { kGet, kInsert, kUpdate, kDelete, kMeta, kCount };
std::string_view to_string(RtTag tag);

using RegionKey = std::uint32_t;

// A request as the server sees it: the frame, the immediate value (the
// sender's client id) and the completion channel.
struct Incoming {
  std::array<std::uint8_t, kRequestFrameBytes> frame{};
  std::uint32_t imm = 0;
  std::promise<std::array<std::uint8_t, kCompletionFrameBytes>> reply;

  void complete(const CompletionFrame& completion) {
    reply.set_value(completion.encode());
  }
};

// Latest connection metadata pushed by the server.
class MetaBoard {
 public:
  void publish(ConnectionMeta meta);
  std::shared_ptr<const ConnectionMeta> current() const;
  std::uint64_t version() const noexcept {
    return version_.load(std::memory_order_acquire);
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const ConnectionMeta> meta_;
  std::atomic<std::uint64_t> version_{0};
};

struct FabricOptions {
  std::size_t max_read_bytes = 1 << 20;
  // Added to every round trip; zero by default.
  std::chrono::nanoseconds round_trip_delay{0};
};

// In-process stand-in for an RDMA fabric between one server and its clients.
class Fabric {
 public:
  explicit Fabric(FabricOptions options = {});
  ~Fabric();
  Fabric(const Fabric&) = delete;
  Fabric& operator=(const Fabric&) = delete;

  // Exposes [0, region.capacity()) to one-sided reads under the returned key.
  RegionKey register_region(const pm::PmRegion& region);

  // One-sided read. Touches only region bytes and their snapshot latch.
  void read(RegionKey key, std::uint64_t offset,
            std::span<std::uint8_t> out) const;

  // Client side of write_with_imm.
  std::future<std::array<std::uint8_t, kCompletionFrameBytes>> send(
      const std::array<std::uint8_t, kRequestFrameBytes>& frame,
      std::uint32_t imm);
  // Server side: next request, or empty after `timeout` or once closed.
  std::optional<Incoming> poll(std::chrono::milliseconds timeout);

  // Rejects new requests and fails queued ones with kDisconnected.
  void close();
  bool closed() const noexcept { return closed_.load(); }

  MetaBoard& meta() noexcept { return meta_; }
  const MetaBoard& meta() const noexcept { return meta_; }
  const FabricOptions& options() const noexcept { return options_; }
  void delay() const;

 private:
  struct Registration {
    const pm::PmRegion* region;
    RegionKey key;
  };

  FabricOptions options_;
  std::vector<Registration> regions_;
  std::uint32_t next_key_seed_ = 0x5eed1234;
  mutable std::mutex region_mu_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<Incoming> queue_;
  std::atomic<bool> closed_{false};

  MetaBoard meta_;
};

using RoundTripCounts =
    std::array<std::uint64_t, static_cast<std::size_t>(RtTag::kCount)>;

// One client's connection. Not thread-safe; use one per client thread.
class Endpoint {
 public:
  Endpoint(Fabric& fabric, std::uint32_t client_id,
           std::chrono::milliseconds timeout = std::chrono::seconds(5));

  std::uint32_t client_id() const noexcept { return client_id_; }
  Fabric& fabric() noexcept { return fabric_; }

  // One round trip each.
  void one_sided_read(RtTag tag, RegionKey key, std::uint64_t offset,
                      std::span<std::uint8_t> out);
  CompletionFrame write_with_imm(RtTag tag, const RequestFrame& request);
  // Pulls the metadata the server last pushed.
  std::shared_ptr<const ConnectionMeta> fetch_meta();

  const RoundTripCounts& round_trips() const noexcept { return counts_; }
  std::uint64_t round_trips(RtTag tag) const noexcept {
    return counts_[static_cast<std::size_t>(tag)];
  }
  std::uint64_t total_round_trips() const noexcept;

 private:
  Fabric& fabric_;
  std::uint32_t client_id_;
  std::chrono::milliseconds timeout_;
  RoundTripCounts counts_{};
};

}  // namespace chash
