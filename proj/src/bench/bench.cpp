#include "chash/bench.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "chash/client.hpp"
#include "json.hpp"

namespace chash::bench {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

constexpr std::size_t kOpTypes = static_cast<std::size_t>(OpType::kCount);
constexpr std::size_t kMinRegion = 4 << 20;
constexpr std::size_t kBytesPerKey = 512;

struct ClientTally {
  std::array<OpReport, kOpTypes> ops{};
  std::array<std::vector<std::uint64_t>, kOpTypes> latencies;
  std::map<unsigned, std::uint64_t> get_reads;
  std::uint64_t corrupt = 0;
  std::uint64_t stale = 0;
  std::string error;
};

LatencySummary summarize(std::vector<std::uint64_t>& ns) {
  LatencySummary s;
  if (ns.empty()) return s;
  std::sort(ns.begin(), ns.end());
  const auto at = [&](double q) {
    const auto i = static_cast<std::size_t>(q * static_cast<double>(ns.size() - 1));
    return ns[i];
  };
  s.mean_ns = static_cast<double>(std::accumulate(ns.begin(), ns.end(), 0.0)) /
              static_cast<double>(ns.size());
  s.p50_ns = at(0.50);
  s.p99_ns = at(0.99);
  s.max_ns = ns.back();
  return s;
}

std::uint64_t ops_for(std::uint64_t total, unsigned client, unsigned clients) {
  return total / clients + (client < total % clients ? 1 : 0);
}

void run_client(Fabric& fabric, const WorkloadSpec& spec, unsigned client,
                unsigned clients, ClientTally& tally) {
  Client kv(fabric, client);
  OpStream stream(spec, client, clients);
  const std::uint64_t n = ops_for(spec.op_count, client, clients);
  for (std::uint64_t i = 0; i < n; ++i) {
    const Operation op = stream.next();
    const Key key = Key::from_id(op.key_id);
    auto& rep = tally.ops[static_cast<std::size_t>(op.type)];
    const auto start = Clock::now();
    std::uint64_t rts = 0;
    bool ok = false;
    auto read = [&] {
      auto v = kv.get(key);
      rts += kv.last_get_reads();
      ++tally.get_reads[kv.last_get_reads()];
      if (v && !is_sealed(key, *v)) ++tally.corrupt;
      return v.has_value();
    };
    switch (op.type) {
      case OpType::kRead:
        ok = read();
        break;
      case OpType::kUpdate:
        ok = kv.put(key, stream.value_for(key), PutMode::kUpdate) == Status::kUpdated;
        rts += 1;
        break;
      case OpType::kInsert:
        ok = kv.put(key, stream.value_for(key), PutMode::kInsert) == Status::kInserted;
        rts += 1;
        break;
      case OpType::kReadModifyWrite:
        read();
        ok = kv.put(key, stream.value_for(key), PutMode::kUpdate) == Status::kUpdated;
        rts += 1;
        break;
      case OpType::kCount:
        break;
    }
    const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
        Clock::now() - start);
    ++rep.count;
    if (ok) ++rep.ok;
    rep.round_trips += rts;
    tally.latencies[static_cast<std::size_t>(op.type)].push_back(
        static_cast<std::uint64_t>(ns.count()));
  }
  tally.stale = kv.stale_retries();
}

json op_json(OpType type, const OpReport& r) {
  return {{"record", "op"},
          {"op", to_string(type)},
          {"count", r.count},
          {"ok", r.ok},
          {"round_trips", r.round_trips},
          {"mean_round_trips", r.count ? double(r.round_trips) / double(r.count) : 0.0},
          {"latency_ns",
           {{"mean", r.latency.mean_ns},
            {"p50", r.latency.p50_ns},
            {"p99", r.latency.p99_ns},
            {"max", r.latency.max_ns}}}};
}

double per_op(std::uint64_t flushes, std::uint64_t ops) {
  return ops == 0 ? 0.0 : double(flushes) / double(ops);
}

}  // namespace

std::uint64_t RunReport::total_ops() const {
  std::uint64_t n = 0;
  for (const auto& op : ops) n += op.count;
  return n;
}

double RunReport::throughput() const {
  return seconds > 0 ? double(total_ops()) / seconds : 0.0;
}

double RunReport::mean_get_reads() const {
  std::uint64_t gets = 0;
  std::uint64_t reads = 0;
  for (const auto& [n, count] : get_reads) {
    gets += count;
    reads += n * count;
  }
  return gets == 0 ? 0.0 : double(reads) / double(gets);
}

std::string RunReport::to_jsonl() const {
  std::ostringstream out;
  json hist = json::object();
  for (const auto& [n, count] : get_reads) hist[std::to_string(n)] = count;
  json run = {{"record", "run"},
              {"workload", to_string(workload.mix)},
              {"distribution", to_string(workload.dist)},
              {"seed", workload.seed},
              {"op_count", workload.op_count},
              {"key_space", workload.key_space},
              {"clients", clients},
              {"server_threads", server_threads},
              {"added_ratio", scheme_name(added_ratio)},
              {"loaded_keys", loaded_keys},
              {"total_ops", total_ops()},
              {"seconds", seconds},
              {"throughput_ops", throughput()},
              {"get_reads_histogram", hist},
              {"mean_get_reads", mean_get_reads()},
              {"corrupt_reads", corrupt_reads},
              {"stale_retries", stale_retries},
              {"groups_added", server.groups_added},
              {"resizes", server.resizes},
              {"failed_requests", server.failed},
              {"resize_load_factors", resize_load_factors},
              {"final_load_factor", final_load_factor},
              {"items", items}};
  out << run.dump() << '\n';
  for (std::size_t i = 0; i < kOpTypes; ++i) {
    if (ops[i].count == 0) continue;
    out << op_json(static_cast<OpType>(i), ops[i]).dump() << '\n';
  }
  json flushes = {
      {"record", "flushes"},
      {"insert", {{"flushes", insert_flushes}, {"ops", inserts_applied},
                  {"per_op", per_op(insert_flushes, inserts_applied)}}},
      {"update", {{"flushes", update_flushes}, {"ops", updates_applied},
                  {"per_op", per_op(update_flushes, updates_applied)}}},
      {"delete", {{"flushes", delete_flushes}, {"ops", deletes_applied},
                  {"per_op", per_op(delete_flushes, deletes_applied)}}}};
  out << flushes.dump() << '\n';
  return out.str();
}

void RunReport::print_table(std::ostream& out) const {
  out << "workload " << to_string(workload.mix) << " (" << to_string(workload.dist)
      << "), " << clients << " clients, " << server_threads
      << " server threads, added groups " << scheme_name(added_ratio) << '\n';
  out << std::fixed << std::setprecision(0) << total_ops() << " ops in "
      << std::setprecision(3) << seconds << " s, " << std::setprecision(0)
      << throughput() << " ops/s\n\n";
  out << std::left << std::setw(8) << "op" << std::right << std::setw(10) << "count"
      << std::setw(10) << "ok" << std::setw(10) << "rt/op" << std::setw(12)
      << "p50 us" << std::setw(12) << "p99 us" << '\n';
  for (std::size_t i = 0; i < kOpTypes; ++i) {
    const auto& r = ops[i];
    if (r.count == 0) continue;
    out << std::left << std::setw(8) << to_string(static_cast<OpType>(i))
        << std::right << std::setw(10) << r.count << std::setw(10) << r.ok
        << std::setw(10) << std::setprecision(3)
        << double(r.round_trips) / double(r.count) << std::setw(12)
        << std::setprecision(1) << double(r.latency.p50_ns) / 1e3
        << std::setw(12) << double(r.latency.p99_ns) / 1e3 << '\n';
  }
  out << "\nflushes/op: insert " << std::setprecision(3)
      << per_op(insert_flushes, inserts_applied) << ", update "
      << per_op(update_flushes, updates_applied) << ", delete "
      << per_op(delete_flushes, deletes_applied) << '\n';
  out << "reads per get:";
  for (const auto& [n, count] : get_reads) out << ' ' << n << ':' << count;
  out << " (mean " << std::setprecision(4) << mean_get_reads() << ")\n";
  out << "groups added " << server.groups_added << ", resizes " << server.resizes
      << ", load factor " << std::setprecision(3) << final_load_factor
      << ", corrupt reads " << corrupt_reads << '\n';
}

RunReport run_workload(const BenchConfig& config) {
  const WorkloadSpec& spec = config.workload;
  spec.validate();
  if (config.clients == 0) throw ConfigError("at least one client is required");
  if (config.server_threads == 0) {
    throw ConfigError("at least one server thread is required");
  }

  const std::uint64_t expected_inserts = spec.op_count * spec.ops.insert / 100;
  std::size_t bytes = config.region_bytes;
  if (bytes == 0) {
    bytes = std::max<std::size_t>(
        kMinRegion, (spec.key_space + expected_inserts) * kBytesPerKey);
  }
  pm::PmRegion region(bytes);
  auto table = ContinuityTable::format(region, config.table);
  Fabric fabric;
  Server server(*table, &fabric);

  std::mt19937_64 load_rng(spec.seed ^ 0x10AD);
  for (std::uint64_t id = 0; id < spec.key_space; ++id) {
    RequestFrame r;
    r.op = Opcode::kInsert;
    r.key = Key::from_id(id);
    std::array<std::uint8_t, kMaxValueSize> payload{};
    for (auto& b : payload) b = static_cast<std::uint8_t>(load_rng());
    const std::size_t span = spec.max_value_len - spec.min_value_len + 1;
    r.value = make_sealed_value(r.key, payload,
                                spec.min_value_len + load_rng() % span);
    const Status s = server.serve(r).status;
    if (s != Status::kInserted) {
      throw std::runtime_error("loading key " + r.key.to_string() + " returned " +
                               std::string(to_string(s)));
    }
  }
  server.publish();

  const auto flushes_before = [&](pm::OpTag tag) { return region.flush_count(tag); };
  const std::uint64_t ins0 = flushes_before(pm::OpTag::kInsert);
  const std::uint64_t upd0 = flushes_before(pm::OpTag::kUpdate);
  const std::uint64_t del0 = flushes_before(pm::OpTag::kDelete);
  const ServerStats stats0 = server.stats();
  const std::size_t resizes0 = server.resize_load_factors().size();

  server.run(config.server_threads);
  std::vector<ClientTally> tallies(config.clients);
  const auto start = Clock::now();
  {
    std::vector<std::thread> threads;
    for (unsigned c = 0; c < config.clients; ++c) {
      threads.emplace_back([&, c] {
        try {
          run_client(fabric, spec, c, config.clients, tallies[c]);
        } catch (const std::exception& e) {
          tallies[c].error = e.what();
        }
      });
    }
    for (auto& t : threads) t.join();
  }
  const auto elapsed = Clock::now() - start;
  server.stop();
  for (const auto& t : tallies) {
    if (!t.error.empty()) throw std::runtime_error("client failed: " + t.error);
  }

  RunReport report;
  report.workload = spec;
  report.clients = config.clients;
  report.server_threads = config.server_threads;
  report.added_ratio = config.table.added_ratio;
  report.loaded_keys = spec.key_space;
  report.seconds = std::chrono::duration<double>(elapsed).count();
  std::array<std::vector<std::uint64_t>, kOpTypes> latencies;
  for (auto& t : tallies) {
    for (std::size_t i = 0; i < kOpTypes; ++i) {
      report.ops[i].count += t.ops[i].count;
      report.ops[i].ok += t.ops[i].ok;
      report.ops[i].round_trips += t.ops[i].round_trips;
      latencies[i].insert(latencies[i].end(), t.latencies[i].begin(),
                          t.latencies[i].end());
    }
    for (const auto& [n, count] : t.get_reads) report.get_reads[n] += count;
    report.corrupt_reads += t.corrupt;
    report.stale_retries += t.stale;
  }
  for (std::size_t i = 0; i < kOpTypes; ++i) {
    report.ops[i].latency = summarize(latencies[i]);
  }

  const auto idx = [](OpType t) { return static_cast<std::size_t>(t); };
  report.insert_flushes = region.flush_count(pm::OpTag::kInsert) - ins0;
  report.update_flushes = region.flush_count(pm::OpTag::kUpdate) - upd0;
  report.delete_flushes = region.flush_count(pm::OpTag::kDelete) - del0;
  report.inserts_applied = report.ops[idx(OpType::kInsert)].ok;
  report.updates_applied = report.ops[idx(OpType::kUpdate)].ok +
                           report.ops[idx(OpType::kReadModifyWrite)].ok;

  const ServerStats stats = server.stats();
  report.server = {stats.requests - stats0.requests,
                   stats.groups_added - stats0.groups_added,
                   stats.resizes - stats0.resizes, stats.failed - stats0.failed};
  const auto lfs = server.resize_load_factors();
  report.resize_load_factors.assign(lfs.begin() + static_cast<std::ptrdiff_t>(resizes0),
                                    lfs.end());
  report.final_load_factor = table->load_factor();
  report.items = table->item_count();
  return report;
}

double LoadFactorSeries::mean() const {
  if (load_factors.empty()) return 0.0;
  return std::accumulate(load_factors.begin(), load_factors.end(), 0.0) /
         static_cast<double>(load_factors.size());
}

std::string LoadFactorSeries::to_jsonl() const {
  json j = {{"record", "load_factor"},
            {"scheme", scheme_name(config.ratio)},
            {"initial_buckets", config.initial_buckets},
            {"resizes", config.resizes},
            {"seed", config.seed},
            {"inserted", inserted},
            {"load_factors", load_factors},
            {"mean", mean()}};
  return j.dump() + '\n';
}

std::string scheme_name(AddedRatio ratio) {
  if (ratio.num == 0) return "none";
  return "added " + std::to_string(ratio.num) + "/" + std::to_string(ratio.den);
}

AddedRatio parse_ratio(const std::string& text) {
  if (text == "0" || text == "none") return {0, 1};
  const auto slash = text.find('/');
  try {
    if (slash != std::string::npos) {
      std::size_t used_num = 0;
      std::size_t used_den = 0;
      const auto num = std::stoul(text.substr(0, slash), &used_num);
      const auto den = std::stoul(text.substr(slash + 1), &used_den);
      if (used_num == slash && used_den == text.size() - slash - 1 && den != 0 &&
          num <= den) {
        return {static_cast<std::uint32_t>(num), static_cast<std::uint32_t>(den)};
      }
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("added ratio must be 0 or a fraction n/d, got '" + text + "'");
}

LoadFactorSeries load_factor_experiment(const LoadFactorConfig& config) {
  LoadFactorSeries series;
  series.config = config;
  TableConfig tc;
  tc.initial_buckets = config.initial_buckets;
  tc.added_ratio = config.ratio.num == 0 ? AddedRatio{0, 1} : config.ratio;
  // Two live tables during the last resize plus freed extents ahead of them.
  const std::size_t final_buckets = config.initial_buckets << (config.resizes + 1);
  const std::size_t bytes =
      std::max<std::size_t>(kMinRegion, final_buckets * 4 * 400);
  pm::PmRegion region(bytes);
  auto table = ContinuityTable::format(region, tc);
  Server server(*table);
  std::mt19937_64 rng(config.seed);
  while (server.stats().resizes < config.resizes) {
    RequestFrame r;
    r.op = Opcode::kInsert;
    r.key = Key::from_id(rng() % 1'000'000'000'000'000ULL);
    std::array<std::uint8_t, kMaxValueSize> payload{};
    r.value = make_sealed_value(r.key, payload, 1 + rng() % kMaxValueSize);
    const Status s = server.serve(r).status;
    if (s == Status::kInserted) {
      ++series.inserted;
    } else if (s != Status::kDuplicate) {
      throw std::runtime_error("load-factor insert returned " +
                               std::string(to_string(s)));
    }
  }
  auto lfs = server.resize_load_factors();
  lfs.resize(config.resizes);
  series.load_factors = std::move(lfs);
  return series;
}

}  // namespace chash::bench
