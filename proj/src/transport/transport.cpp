#include "chash/transport.hpp"

#include <string>
#include <thread>

namespace chash {

std::string_view to_string(RtTag tag) {
  switch (tag) {
    case RtTag::kGet: return "get";
    case RtTag::kInsert: return "insert";
    case RtTag::kUpdate: return "update";
    case RtTag::kDelete: return "delete";
    case RtTag::kMeta: return "meta";
    case RtTag::kCount: break;
  }
  return "unknown";
}

void MetaBoard::publish(ConnectionMeta meta) {
  std::lock_guard lock(mu_);
  meta.version = version_.load(std::memory_order_relaxed) + 1;
  meta_ = std::make_shared<const ConnectionMeta>(std::move(meta));
  version_.store(meta_->version, std::memory_order_release);
}

std::shared_ptr<const ConnectionMeta> MetaBoard::current() const {
  std::lock_guard lock(mu_);
  return meta_;
}

Fabric::Fabric(FabricOptions options) : options_(options) {}

Fabric::~Fabric() { close(); }

RegionKey Fabric::register_region(const pm::PmRegion& region) {
  std::lock_guard lock(region_mu_);
  // Keys only need to be unguessable enough to catch stale handles.
  next_key_seed_ = next_key_seed_ * 1103515245U + 12345U;
  const RegionKey key = next_key_seed_ | 1U;
  regions_.push_back({&region, key});
  return key;
}

void Fabric::delay() const {
  if (options_.round_trip_delay.count() > 0) {
    std::this_thread::sleep_for(options_.round_trip_delay);
  }
}

void Fabric::read(RegionKey key, std::uint64_t offset,
                  std::span<std::uint8_t> out) const {
  if (out.size() > options_.max_read_bytes) {
    throw ProtectionError("one-sided read of " + std::to_string(out.size()) +
                          " bytes exceeds the transfer limit");
  }
  const pm::PmRegion* region = nullptr;
  {
    std::lock_guard lock(region_mu_);
    for (const auto& r : regions_) {
      if (r.key == key) region = r.region;
    }
  }
  if (region == nullptr) throw ProtectionError("unknown region key");
  if (offset > region->capacity() || out.size() > region->capacity() - offset) {
    throw ProtectionError("one-sided read outside the registered region");
  }
  region->snapshot_read(offset, out);
}

std::future<std::array<std::uint8_t, kCompletionFrameBytes>> Fabric::send(
    const std::array<std::uint8_t, kRequestFrameBytes>& frame,
    std::uint32_t imm) {
  Incoming in;
  in.frame = frame;
  in.imm = imm;
  auto future = in.reply.get_future();
  {
    std::lock_guard lock(queue_mu_);
    if (closed_.load()) {
      throw TransportError(TransportError::Kind::kDisconnected,
                           "server endpoint closed");
    }
    queue_.push_back(std::move(in));
  }
  queue_cv_.notify_one();
  return future;
}

std::optional<Incoming> Fabric::poll(std::chrono::milliseconds timeout) {
  std::unique_lock lock(queue_mu_);
  if (!queue_cv_.wait_for(lock, timeout,
                          [&] { return !queue_.empty() || closed_.load(); })) {
    return std::nullopt;
  }
  if (queue_.empty()) return std::nullopt;
  Incoming in = std::move(queue_.front());
  queue_.pop_front();
  return in;
}

void Fabric::close() {
  std::deque<Incoming> pending;
  {
    std::lock_guard lock(queue_mu_);
    if (closed_.exchange(true)) return;
    pending.swap(queue_);
  }
  queue_cv_.notify_all();
  for (auto& in : pending) {
    in.reply.set_exception(std::make_exception_ptr(TransportError(
        TransportError::Kind::kDisconnected, "server endpoint closed")));
  }
}

Endpoint::Endpoint(Fabric& fabric, std::uint32_t client_id,
                   std::chrono::milliseconds timeout)
    : fabric_(fabric), client_id_(client_id), timeout_(timeout) {}

void Endpoint::one_sided_read(RtTag tag, RegionKey key, std::uint64_t offset,
                              std::span<std::uint8_t> out) {
  ++counts_[static_cast<std::size_t>(tag)];
  fabric_.delay();
  fabric_.read(key, offset, out);
}

CompletionFrame Endpoint::write_with_imm(RtTag tag,
                                         const RequestFrame& request) {
  ++counts_[static_cast<std::size_t>(tag)];
  fabric_.delay();
  auto future = fabric_.send(request.encode(), client_id_);
  if (future.wait_for(timeout_) != std::future_status::ready) {
    throw TransportError(TransportError::Kind::kTimeout,
                         "no completion for request " +
                             std::to_string(request.request_id));
  }
  try {
    return CompletionFrame::decode(future.get());
  } catch (const std::future_error&) {
    throw TransportError(TransportError::Kind::kDisconnected,
                         "server dropped request " +
                             std::to_string(request.request_id));
  }
}

std::shared_ptr<const ConnectionMeta> Endpoint::fetch_meta() {
  ++counts_[static_cast<std::size_t>(RtTag::kMeta)];
  return fabric_.meta().current();
}

std::uint64_t Endpoint::total_round_trips() const noexcept {
  std::uint64_t total = 0;
  for (auto c : counts_) total += c;
  return total;
}

}  // namespace chash
