#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "chash/server.hpp"
#include "chash/table.hpp"
#include "chash/workload.hpp"

namespace chash::bench {

struct BenchConfig {
  WorkloadSpec workload;
  unsigned clients = 1;
  unsigned server_threads = 1;
  TableConfig table;
  // Region size; 0 sizes it from the key count.
  std::size_t region_bytes = 0;
};

struct LatencySummary {
  double mean_ns = 0;
  std::uint64_t p50_ns = 0;
  std::uint64_t p99_ns = 0;
  std::uint64_t max_ns = 0;
};

struct OpReport {
  std::uint64_t count = 0;
  // Reads that found the key; writes that changed the table.
  std::uint64_t ok = 0;
  std::uint64_t round_trips = 0;
  LatencySummary latency;
};

struct RunReport {
  WorkloadSpec workload;
  unsigned clients = 0;
  unsigned server_threads = 0;
  AddedRatio added_ratio;
  std::uint64_t loaded_keys = 0;
  double seconds = 0;
  std::array<OpReport, static_cast<std::size_t>(OpType::kCount)> ops{};

  // Flushed lines charged to each write kind during the run phase, and the
  // writes that succeeded.
  std::uint64_t insert_flushes = 0;
  std::uint64_t update_flushes = 0;
  std::uint64_t delete_flushes = 0;
  std::uint64_t inserts_applied = 0;
  std::uint64_t updates_applied = 0;
  std::uint64_t deletes_applied = 0;

  // One-sided reads per get -> gets.
  std::map<unsigned, std::uint64_t> get_reads;
  // Reads whose value failed its seal check.
  std::uint64_t corrupt_reads = 0;
  std::uint64_t stale_retries = 0;

  ServerStats server;
  std::vector<double> resize_load_factors;
  double final_load_factor = 0;
  std::uint64_t items = 0;

  std::uint64_t total_ops() const;
  double throughput() const;
  double mean_get_reads() const;
  // One JSON object per line: a "run" record, one "op" record per op type
  // and one "flushes" record.
  std::string to_jsonl() const;
  void print_table(std::ostream& out) const;
};

// Loads the key space, runs the mix with `clients` threads against one
// server and reports. Throws ConfigError for an invalid workload.
RunReport run_workload(const BenchConfig& config);

struct LoadFactorConfig {
  std::uint64_t initial_buckets = 20;
  unsigned resizes = 5;
  // {0, 1} disables added groups.
  AddedRatio ratio{1, 10};
  std::uint64_t seed = 1;
};

struct LoadFactorSeries {
  LoadFactorConfig config;
  // Load factor when each resize triggered.
  std::vector<double> load_factors;
  std::uint64_t inserted = 0;

  double mean() const;
  std::string to_jsonl() const;
};

std::string scheme_name(AddedRatio ratio);
// Accepts 0, 1/20, 1/10 and other n/d fractions.
AddedRatio parse_ratio(const std::string& text);

// Inserts random keys until `resizes` resizes have triggered.
LoadFactorSeries load_factor_experiment(const LoadFactorConfig& config);

}  // namespace chash::bench
