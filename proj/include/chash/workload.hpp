#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "chash/key_value.hpp"

namespace chash::bench {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mix { kA, kB, kC, kD, kF, kNeg, kUpdateOnly };
enum class KeyDist { kUniform, kZipfian, kLatest };
enum class OpType : std::uint8_t { kRead, kUpdate, kInsert, kReadModifyWrite, kCount };

std::string_view to_string(Mix mix);
std::string_view to_string(KeyDist dist);
std::string_view to_string(OpType op);
// Accepts A, B, C, D, F, neg and update-only (case-insensitive letters).
Mix parse_mix(std::string_view text);

// Percentages; must sum to 100.
struct OpMix {
  unsigned read = 0;
  unsigned update = 0;
  unsigned insert = 0;
  unsigned read_modify_write = 0;
};

struct WorkloadSpec {
  Mix mix = Mix::kA;
  OpMix ops;
  KeyDist dist = KeyDist::kZipfian;
  double theta = 0.99;
  std::uint64_t op_count = 1'000'000;
  std::uint64_t key_space = 100'000;
  std::size_t min_value_len = 1;
  std::size_t max_value_len = kMaxValueSize;
  std::uint64_t seed = 1;
  // Reads target keys that were never loaded.
  bool negative_reads = false;

  static WorkloadSpec preset(Mix mix);
  // Throws ConfigError.
  void validate() const;
};

// Key ids outside any loaded key space.
std::uint64_t negative_id(std::uint64_t n);

// YCSB zipfian over [0, n): item 0 is the most popular.
class ZipfianGenerator {
 public:
  ZipfianGenerator(std::uint64_t n, double theta);
  std::uint64_t next(std::mt19937_64& rng);
  // Extends the item count, updating the normalization incrementally.
  void grow_to(std::uint64_t n);
  std::uint64_t items() const noexcept { return n_; }

 private:
  void refresh();

  std::uint64_t n_;
  double theta_;
  double zetan_ = 0;
  double zeta2_ = 0;
  double alpha_ = 0;
  double eta_ = 0;
};

struct Operation {
  OpType type = OpType::kRead;
  std::uint64_t key_id = 0;
};

// Deterministic operation sequence for one client out of `clients`.
class OpStream {
 public:
  OpStream(const WorkloadSpec& spec, unsigned client, unsigned clients);

  Operation next();
  Value value_for(const Key& key);
  std::uint64_t inserted() const noexcept { return own_inserts_.size(); }

 private:
  std::uint64_t pick_existing();

  WorkloadSpec spec_;
  unsigned client_;
  unsigned clients_;
  std::mt19937_64 rng_;
  ZipfianGenerator zipf_;
  std::vector<std::uint64_t> own_inserts_;
};

}  // namespace chash::bench
