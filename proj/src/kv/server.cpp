#include "chash/server.hpp"

namespace chash {

Server::Server(ContinuityTable& table, Fabric* fabric, ServerOptions options)
    : table_(table), fabric_(fabric), options_(options) {
  if (fabric_ != nullptr) {
    region_key_ = fabric_->register_region(table_.region());
    publish();
  }
}

Server::~Server() { stop(); }

TableMeta Server::table_meta(const TableLayout& layout,
                             std::vector<std::uint64_t> directory) const {
  TableMeta m;
  m.base_addr = layout.base_addr;
  m.buckets = layout.buckets;
  m.sbuckets_per_pair = layout.sbuckets_per_pair;
  m.indicator_size = layout.indicator_size;
  m.size_bu = layout.size_bu();
  m.size_se = layout.size_se();
  m.pair_stride = layout.pair_stride();
  m.directory_addr = layout.directory_addr();
  m.directory = std::move(directory);
  return m;
}

ConnectionMeta Server::make_meta() const {
  ConnectionMeta meta;
  meta.epoch = table_.epoch();
  meta.region_key = region_key_;
  meta.active = table_meta(table_.layout(), table_.directory());
  return meta;
}

void Server::publish() {
  if (fabric_ != nullptr) fabric_->meta().publish(make_meta());
}

CompletionFrame Server::serve(const RequestFrame& request) {
  requests_.fetch_add(1, std::memory_order_relaxed);
  CompletionFrame done;
  done.request_id = request.request_id;
  for (unsigned attempt = 0; attempt < options_.max_attempts; ++attempt) {
    std::uint64_t epoch_seen = 0;
    bool had_group = false;
    {
      std::shared_lock gate(gate_);
      bool full = false;
      switch (request.op) {
        case Opcode::kInsert:
          switch (table_.insert(request.key, request.value)) {
            case InsertOutcome::kInserted: done.status = Status::kInserted; break;
            case InsertOutcome::kDuplicate: done.status = Status::kDuplicate; break;
            case InsertOutcome::kNeedsResize: full = true; break;
          }
          break;
        case Opcode::kUpdate:
          switch (table_.update(request.key, request.value)) {
            case UpdateOutcome::kUpdated: done.status = Status::kUpdated; break;
            case UpdateOutcome::kNotFound: done.status = Status::kNotFound; break;
            case UpdateOutcome::kNeedsResize: full = true; break;
          }
          break;
        case Opcode::kDelete:
          done.status = table_.erase(request.key) == DeleteOutcome::kDeleted
                            ? Status::kDeleted
                            : Status::kNotFound;
          break;
      }
      if (!full) {
        done.epoch = table_.epoch();
        return done;
      }
      // Groups are only added under the exclusive gate, so this is the
      // state the failed attempt saw.
      epoch_seen = table_.epoch();
      had_group =
          table_.added_group(table_.bucket_number(request.key) / 2) != 0;
    }
    if (grow(request.key, epoch_seen, had_group) == Growth::kFailed) break;
  }
  failed_.fetch_add(1, std::memory_order_relaxed);
  done.status = Status::kFailed;
  done.epoch = table_.epoch();
  return done;
}

Server::Growth Server::grow(const Key& key, std::uint64_t epoch_seen,
                            bool had_group) {
  std::unique_lock gate(gate_);
  if (table_.epoch() != epoch_seen) return Growth::kRetry;
  const std::uint64_t pair = table_.bucket_number(key) / 2;
  if (!had_group) {
    if (table_.added_group(pair) != 0) return Growth::kRetry;
    if (table_.add_sbucket_group(pair).outcome == AddGroupOutcome::kAdded) {
      groups_added_.fetch_add(1, std::memory_order_relaxed);
      publish();
      return Growth::kGrown;
    }
  }
  {
    std::lock_guard lock(stats_mu_);
    resize_load_factors_.push_back(table_.load_factor());
  }
  ResizeOptions opts;
  opts.on_start = [this](const TableLayout& from, const TableLayout& to) {
    if (fabric_ == nullptr) return;
    ConnectionMeta meta;
    meta.epoch = table_.epoch();
    meta.region_key = region_key_;
    meta.active = table_meta(from, table_.directory());
    meta.next = table_meta(to, {});
    fabric_->meta().publish(std::move(meta));
  };
  try {
    table_.resize(opts);
  } catch (const AllocationError&) {
    publish();
    return Growth::kFailed;
  }
  resizes_.fetch_add(1, std::memory_order_relaxed);
  publish();
  return Growth::kGrown;
}

void Server::run(unsigned threads) {
  if (fabric_ == nullptr) {
    throw std::logic_error("server has no fabric to poll");
  }
  if (!workers_.empty()) return;
  stop_.store(false);
  for (unsigned i = 0; i < std::max(1U, threads); ++i) {
    workers_.emplace_back([this] { worker(); });
  }
}

void Server::stop() {
  stop_.store(true);
  for (auto& w : workers_) w.join();
  workers_.clear();
}

void Server::worker() {
  while (!stop_.load() && !crashed_.load()) {
    auto in = fabric_->poll(options_.poll_interval);
    if (!in) {
      if (fabric_->closed()) return;
      continue;
    }
    auto request = RequestFrame::decode(in->frame);
    if (!request || request->client_id != in->imm) {
      CompletionFrame bad;
      if (request) bad.request_id = request->request_id;
      bad.status = Status::kInvalid;
      in->complete(bad);
      continue;
    }
    try {
      in->complete(serve(*request));
    } catch (const pm::PowerFailure&) {
      crashed_.store(true);
      std::lock_guard lock(orphan_mu_);
      orphans_.push_back(std::move(*in));
      return;
    } catch (const std::exception&) {
      CompletionFrame failed;
      failed.request_id = request->request_id;
      failed.status = Status::kFailed;
      failed.epoch = table_.epoch();
      failed_.fetch_add(1, std::memory_order_relaxed);
      in->complete(failed);
    }
  }
}

std::vector<double> Server::resize_load_factors() const {
  std::lock_guard lock(stats_mu_);
  return resize_load_factors_;
}

ServerStats Server::stats() const {
  return {requests_.load(), groups_added_.load(), resizes_.load(),
          failed_.load()};
}

}  // namespace chash
