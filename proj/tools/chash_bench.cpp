// Benchmark and experiment driver.
//
//   chash_bench run --workload A --ops 1000000 --keys 100000 --clients 4
//   chash_bench load-factor --resizes 6 --added-ratio 1/10

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "chash/bench.hpp"

namespace {

using namespace chash;

void write_report(const std::string& path, const std::string& jsonl) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open report file " + path);
  out << jsonl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuity hash table benchmark"};
  app.require_subcommand(1);

  std::string workload = "A";
  std::string dist;
  std::string ratio = "1/10";
  std::string report_path;
  std::uint64_t ops = 1'000'000;
  std::uint64_t keys = 100'000;
  std::uint64_t seed = 1;
  unsigned clients = 1;
  unsigned server_threads = 1;
  unsigned sbuckets = 3;
  double theta = 0.99;

  auto* run = app.add_subcommand("run", "Load the key space and run a workload mix");
  run->add_option("--workload", workload, "A, B, C, D, F, neg or update-only")
      ->capture_default_str();
  run->add_option("--distribution", dist, "uniform, zipfian or latest (default per workload)");
  run->add_option("--theta", theta, "Zipfian skew")->capture_default_str();
  run->add_option("--ops", ops, "Operations in the run phase")->capture_default_str();
  run->add_option("--keys", keys, "Keys loaded before the run")->capture_default_str();
  run->add_option("--clients", clients, "Client threads")->capture_default_str();
  run->add_option("--server-threads", server_threads, "Server worker threads")
      ->capture_default_str();
  run->add_option("--sbuckets", sbuckets, "SBuckets per segment pair")
      ->capture_default_str();
  run->add_option("--added-ratio", ratio, "0, 1/20 or 1/10")->capture_default_str();
  run->add_option("--seed", seed, "Workload seed")->capture_default_str();
  run->add_option("--report", report_path, "Append JSON lines to this file");

  unsigned resizes = 5;
  std::uint64_t initial = 20;
  auto* lf = app.add_subcommand("load-factor",
                                "Record the load factor at each resize trigger");
  lf->add_option("--resizes", resizes, "Resizes to observe")->capture_default_str();
  lf->add_option("--initial-buckets", initial, "Initial bucket count")
      ->capture_default_str();
  lf->add_option("--added-ratio", ratio, "0, 1/20 or 1/10")->capture_default_str();
  lf->add_option("--seed", seed, "Key seed")->capture_default_str();
  lf->add_option("--report", report_path, "Append JSON lines to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      bench::BenchConfig config;
      config.workload = bench::WorkloadSpec::preset(bench::parse_mix(workload));
      if (!dist.empty()) {
        if (dist == "uniform") {
          config.workload.dist = bench::KeyDist::kUniform;
        } else if (dist == "zipfian") {
          config.workload.dist = bench::KeyDist::kZipfian;
        } else if (dist == "latest") {
          config.workload.dist = bench::KeyDist::kLatest;
        } else {
          throw bench::ConfigError("unknown distribution '" + dist + "'");
        }
      }
      config.workload.theta = theta;
      config.workload.op_count = ops;
      config.workload.key_space = keys;
      config.workload.seed = seed;
      config.clients = clients;
      config.server_threads = server_threads;
      config.table.sbuckets_per_pair = sbuckets;
      config.table.added_ratio = bench::parse_ratio(ratio);
      const auto report = bench::run_workload(config);
      report.print_table(std::cout);
      write_report(report_path, report.to_jsonl());
    } else {
      bench::LoadFactorConfig config;
      config.initial_buckets = initial;
      config.resizes = resizes;
      config.ratio = bench::parse_ratio(ratio);
      config.seed = seed;
      const auto series = bench::load_factor_experiment(config);
      std::cout << "scheme " << bench::scheme_name(config.ratio) << ", "
                << series.inserted << " inserts\n";
      for (std::size_t i = 0; i < series.load_factors.size(); ++i) {
        std::cout << "resize " << i + 1 << ": load factor "
                  << series.load_factors[i] << '\n';
      }
      std::cout << "mean " << series.mean() << '\n';
      write_report(report_path, series.to_jsonl());
    }
  } catch (const bench::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
