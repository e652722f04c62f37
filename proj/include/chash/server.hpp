#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <shared_mutex>
#include <thread>
#include <vector>

#include "chash/protocol.hpp"
#include "chash/table.hpp"
#include "chash/transport.hpp"

namespace chash {

struct ServerOptions {
  // Attempts per request across add-group and resize rounds.
  unsigned max_attempts = 8;
  std::chrono::milliseconds poll_interval{5};
};

struct ServerStats {
  std::uint64_t requests = 0;
  std::uint64_t groups_added = 0;
  std::uint64_t resizes = 0;
  std::uint64_t failed = 0;
};

// Executes write requests against a table and keeps clients' metadata
// current. Writes run concurrently under a shared gate; growing the table
// (added group or resize) takes the gate exclusively.
class Server {
 public:
  explicit Server(ContinuityTable& table, Fabric* fabric = nullptr,
                  ServerOptions options = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Runs one request to completion; returns after it is durable.
  CompletionFrame serve(const RequestFrame& request);

  // Starts `threads` workers polling the fabric. Calling run() while
  // running is a no-op.
  void run(unsigned threads);
  // Stops workers after the requests they hold finish.
  void stop();
  bool running() const noexcept { return !workers_.empty(); }
  // A worker hit a simulated power failure and stopped.
  bool crashed() const noexcept { return crashed_.load(); }

  ConnectionMeta make_meta() const;
  void publish();

  // Load factor of the table each time a resize was triggered.
  std::vector<double> resize_load_factors() const;
  ServerStats stats() const;
  ContinuityTable& table() noexcept { return table_; }

 private:
  enum class Growth { kRetry, kGrown, kFailed };
  Growth grow(const Key& key, std::uint64_t epoch_seen, bool had_group);
  void worker();
  TableMeta table_meta(const TableLayout& layout,
                       std::vector<std::uint64_t> directory) const;

  ContinuityTable& table_;
  Fabric* fabric_;
  ServerOptions options_;
  RegionKey region_key_ = 0;

  std::shared_mutex gate_;
  std::vector<std::thread> workers_;
  std::atomic<bool> stop_{false};
  std::atomic<bool> crashed_{false};
  std::mutex orphan_mu_;
  // Requests cut off by a crash keep their promises alive so that clients
  // time out instead of seeing a broken connection.
  std::vector<Incoming> orphans_;

  mutable std::mutex stats_mu_;
  std::vector<double> resize_load_factors_;
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> groups_added_{0};
  std::atomic<std::uint64_t> resizes_{0};
  std::atomic<std::uint64_t> failed_{0};
};

}  // namespace chash
