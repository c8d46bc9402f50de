// Multi-process stress and benchmark driver.

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "daxfs/bench.hpp"

using namespace daxfs;

namespace {

// key = value lines, # comments.  Unknown keys are an error so config typos
// fail loudly.
Result<std::map<std::string, std::string>> parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) return Errc::io_error;
  std::map<std::string, std::string> kv;
  std::string line;
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) return Errc::invalid;
    std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (k.empty() || v.empty()) return Errc::invalid;
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
      v = v.substr(1, v.size() - 2);
    kv[k] = v;
  }
  return kv;
}

Result<Scenario> scenario_from_config(const std::map<std::string, std::string>& kv) {
  Scenario s;
  for (const auto& [k, v] : kv) {
    try {
      if (k == "name" || k == "scenario") s.name = v;
      else if (k == "processes") s.process_count = std::stoi(v);
      else if (k == "ops" || k == "rounds") s.ops_per_process = std::stoull(v);
      else if (k == "delay_ns") s.delay_ns = std::stoull(v);
      else if (k == "seed") s.seed = std::stoull(v);
      else if (k == "duration_cap_s") s.duration_cap_s = std::stoull(v);
      else if (k == "buckets") s.bucket_count = std::stoull(v);
      else if (k == "pool") s.pool_len = std::stoull(v);
      else if (k == "image") s.image_path = v;
      else if (k == "dist") {
        if (v == "distinct") s.dist = KeyDist::distinct;
        else if (v == "shared") s.dist = KeyDist::shared;
        else if (v == "zipf") s.dist = KeyDist::zipf;
        else return Errc::invalid;
      } else {
        std::cerr << "bench: unknown config key '" << k << "'\n";
        return Errc::invalid;
      }
    } catch (const std::exception&) {
      return Errc::invalid;
    }
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DAXFS stress and benchmark harness"};
  app.require_subcommand(1);
  bool json = false;
  app.add_flag("--json", json, "JSON output");

  std::string config;
  auto* c_run = app.add_subcommand("run", "run a stress scenario from a config file");
  c_run->add_option("config", config, "key = value scenario file")->required();

  IoConfig io;
  std::string pattern = "seqwrite";
  auto* c_io = app.add_subcommand("io", "fio-shaped synchronous workload");
  c_io->add_option("--pattern", pattern, "seqwrite | seqread | randwrite | randread");
  c_io->add_option("--block", io.block, "block bytes (multiple of 4096)");
  c_io->add_option("--workers", io.workers, "worker process count");
  c_io->add_option("--file-size", io.file_size, "per-worker file bytes");
  c_io->add_option("--seed", io.seed, "rng seed");
  c_io->add_option("--image", io.image_path, "scratch image path")->required();

  double load = 0.75;
  u64 buckets = 65536;
  int trials = 5;
  u64 pseed = 1;
  auto* c_probe = app.add_subcommand("probe", "hash probe-length statistics");
  c_probe->add_option("--load", load, "table load factor (0,1)");
  c_probe->add_option("--buckets", buckets, "bucket count");
  c_probe->add_option("--trials", trials, "trial count");
  c_probe->add_option("--seed", pseed, "rng seed");
  CLI11_PARSE(app, argc, argv);

  if (c_run->parsed()) {
    auto kv = parse_config(config);
    if (!kv.ok()) {
      std::cerr << "bench: cannot parse " << config << "\n";
      return 5;
    }
    auto sc = scenario_from_config(*kv);
    if (!sc.ok()) return 5;
    auto rep = run_scenario(*sc);
    if (!rep.ok()) {
      std::cerr << "bench: " << errc_name(rep.err) << "\n";
      return 5;
    }
    if (json)
      std::cout << report_json(*rep) << "\n";
    else
      report_text(*rep, std::cout);
    return rep->ok ? 0 : 6;
  }
  if (c_io->parsed()) {
    auto pr = parse_pattern(pattern);
    if (!pr.ok()) {
      std::cerr << "bench: bad pattern '" << pattern << "'\n";
      return 5;
    }
    io.pattern = *pr;
    auto rep = bench_io(io);
    if (!rep.ok()) {
      std::cerr << "bench: " << errc_name(rep.err) << "\n";
      return 5;
    }
    if (json)
      std::cout << report_json(*rep) << "\n";
    else
      report_text(*rep, std::cout);
    return rep->ok ? 0 : 6;
  }
  if (c_probe->parsed()) {
    auto rep = probe_stats(load, buckets, trials, pseed);
    if (!rep.ok()) {
      std::cerr << "bench: " << errc_name(rep.err) << "\n";
      return 5;
    }
    if (json)
      std::cout << "{\"load\": " << load << ", \"buckets\": " << buckets
                << ", \"trials\": " << rep->trials
                << ", \"keys_per_trial\": " << rep->keys_per_trial
                << ", \"mean_probes\": " << rep->mean_probes << "}\n";
    else
      std::cout << "load: " << load << "\nbuckets: " << buckets
                << "\ntrials: " << rep->trials
                << "\nkeys_per_trial: " << rep->keys_per_trial
                << "\nmean_probes: " << rep->mean_probes << "\n";
    return 0;
  }
  return 5;
}
