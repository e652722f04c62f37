#include "chash/workload.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <string>

#include "chash/hash.hpp"

namespace chash::bench {

namespace {

constexpr std::uint64_t kNegativeBase = 900'000'000'000'000ULL;
constexpr std::uint64_t kInsertBase = 500'000'000'000'000ULL;

double zeta(std::uint64_t from, std::uint64_t to, double theta, double start) {
  double sum = start;
  for (std::uint64_t i = from; i < to; ++i) {
    sum += 1.0 / std::pow(static_cast<double>(i + 1), theta);
  }
  return sum;
}

std::uint64_t scramble(std::uint64_t rank, std::uint64_t n) {
  std::array<std::uint8_t, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(rank >> (8 * i));
  return fnv1a64(bytes) % n;
}

}  // namespace

std::string_view to_string(Mix mix) {
  switch (mix) {
    case Mix::kA: return "A";
    case Mix::kB: return "B";
    case Mix::kC: return "C";
    case Mix::kD: return "D";
    case Mix::kF: return "F";
    case Mix::kNeg: return "neg";
    case Mix::kUpdateOnly: return "update-only";
  }
  return "?";
}

std::string_view to_string(KeyDist dist) {
  switch (dist) {
    case KeyDist::kUniform: return "uniform";
    case KeyDist::kZipfian: return "zipfian";
    case KeyDist::kLatest: return "latest";
  }
  return "?";
}

std::string_view to_string(OpType op) {
  switch (op) {
    case OpType::kRead: return "read";
    case OpType::kUpdate: return "update";
    case OpType::kInsert: return "insert";
    case OpType::kReadModifyWrite: return "rmw";
    case OpType::kCount: break;
  }
  return "?";
}

Mix parse_mix(std::string_view text) {
  std::string t(text);
  for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "a") return Mix::kA;
  if (t == "b") return Mix::kB;
  if (t == "c") return Mix::kC;
  if (t == "d") return Mix::kD;
  if (t == "f") return Mix::kF;
  if (t == "neg") return Mix::kNeg;
  if (t == "update-only") return Mix::kUpdateOnly;
  throw ConfigError("unknown workload '" + std::string(text) + "'");
}

WorkloadSpec WorkloadSpec::preset(Mix mix) {
  WorkloadSpec s;
  s.mix = mix;
  switch (mix) {
    case Mix::kA: s.ops = {50, 50, 0, 0}; break;
    case Mix::kB: s.ops = {95, 5, 0, 0}; break;
    case Mix::kC: s.ops = {100, 0, 0, 0}; break;
    case Mix::kD:
      s.ops = {95, 0, 5, 0};
      s.dist = KeyDist::kLatest;
      break;
    case Mix::kF: s.ops = {50, 0, 0, 50}; break;
    case Mix::kNeg:
      s.ops = {100, 0, 0, 0};
      s.negative_reads = true;
      s.dist = KeyDist::kUniform;
      break;
    case Mix::kUpdateOnly: s.ops = {0, 100, 0, 0}; break;
  }
  return s;
}

void WorkloadSpec::validate() const {
  const unsigned total = ops.read + ops.update + ops.insert + ops.read_modify_write;
  if (total != 100) {
    throw ConfigError("operation mix sums to " + std::to_string(total) +
                      "%, not 100%");
  }
  if (key_space == 0) throw ConfigError("key space is empty");
  if (min_value_len < 1 || max_value_len > kMaxValueSize ||
      min_value_len > max_value_len) {
    throw ConfigError("value length range must lie within [1, 15]");
  }
  if (dist == KeyDist::kZipfian || dist == KeyDist::kLatest) {
    if (!(theta > 0.0 && theta < 1.0)) {
      throw ConfigError("zipfian theta must be in (0, 1)");
    }
  }
}

std::uint64_t negative_id(std::uint64_t n) { return kNegativeBase + n; }

ZipfianGenerator::ZipfianGenerator(std::uint64_t n, double theta)
    : n_(std::max<std::uint64_t>(n, 1)), theta_(theta) {
  zetan_ = zeta(0, n_, theta_, 0.0);
  zeta2_ = zeta(0, 2, theta_, 0.0);
  alpha_ = 1.0 / (1.0 - theta_);
  refresh();
}

void ZipfianGenerator::refresh() {
  eta_ = (1.0 - std::pow(2.0 / static_cast<double>(n_), 1.0 - theta_)) /
         (1.0 - zeta2_ / zetan_);
}

void ZipfianGenerator::grow_to(std::uint64_t n) {
  if (n <= n_) return;
  zetan_ = zeta(n_, n, theta_, zetan_);
  n_ = n;
  refresh();
}

std::uint64_t ZipfianGenerator::next(std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double uz = u * zetan_;
  if (uz < 1.0) return 0;
  if (uz < 1.0 + std::pow(0.5, theta_)) return std::min<std::uint64_t>(1, n_ - 1);
  const auto v = static_cast<std::uint64_t>(
      static_cast<double>(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_));
  return std::min(v, n_ - 1);
}

OpStream::OpStream(const WorkloadSpec& spec, unsigned client, unsigned clients)
    : spec_(spec),
      client_(client),
      clients_(std::max(1U, clients)),
      rng_(spec.seed * 0x9E3779B97F4A7C15ULL + client),
      zipf_(spec.key_space, spec.dist == KeyDist::kUniform ? 0.5 : spec.theta) {
  spec_.validate();
}

std::uint64_t OpStream::pick_existing() {
  switch (spec_.dist) {
    case KeyDist::kUniform:
      return rng_() % spec_.key_space;
    case KeyDist::kZipfian:
      return scramble(zipf_.next(rng_), spec_.key_space);
    case KeyDist::kLatest: {
      // Index space: loaded keys, then this client's inserts, newest last.
      const std::uint64_t total = spec_.key_space + own_inserts_.size();
      zipf_.grow_to(total);
      const std::uint64_t index = total - 1 - zipf_.next(rng_);
      return index < spec_.key_space ? index
                                     : own_inserts_[index - spec_.key_space];
    }
  }
  return 0;
}

Operation OpStream::next() {
  const unsigned roll = static_cast<unsigned>(rng_() % 100);
  const OpMix& m = spec_.ops;
  Operation op;
  if (roll < m.read) {
    op.type = OpType::kRead;
  } else if (roll < m.read + m.update) {
    op.type = OpType::kUpdate;
  } else if (roll < m.read + m.update + m.insert) {
    op.type = OpType::kInsert;
  } else {
    op.type = OpType::kReadModifyWrite;
  }
  if (op.type == OpType::kInsert) {
    op.key_id = kInsertBase + own_inserts_.size() * clients_ + client_;
    own_inserts_.push_back(op.key_id);
  } else if (op.type == OpType::kRead && spec_.negative_reads) {
    op.key_id = negative_id(rng_() % spec_.key_space);
  } else {
    op.key_id = pick_existing();
  }
  return op;
}

Value OpStream::value_for(const Key& key) {
  std::array<std::uint8_t, kMaxValueSize> payload{};
  for (auto& b : payload) b = static_cast<std::uint8_t>(rng_());
  const std::size_t span = spec_.max_value_len - spec_.min_value_len + 1;
  return make_sealed_value(key, payload, spec_.min_value_len + rng_() % span);
}

}  // namespace chash::bench
