#pragma once

#include <atomic>
#include <functional>
#include <iosfwd>
#include <string>
#include <thread>
#include <vector>

#include "daxfs/types.hpp"

namespace daxfs {

// Sense-reversal barrier living in a MAP_SHARED page; usable across fork().
class ShmBarrier {
 public:
  void init(u32 parties) {
    parties_.store(parties, std::memory_order_relaxed);
    arrived_.store(0, std::memory_order_relaxed);
    sense_.store(0, std::memory_order_release);
  }
  void wait() {
    u32 s = sense_.load(std::memory_order_acquire);
    if (arrived_.fetch_add(1, std::memory_order_acq_rel) + 1 ==
        parties_.load(std::memory_order_relaxed)) {
      arrived_.store(0, std::memory_order_relaxed);
      sense_.store(s + 1, std::memory_order_release);
    } else {
      // Workers typically outnumber cores; yield instead of burning the quantum.
      while (sense_.load(std::memory_order_acquire) == s) std::this_thread::yield();
    }
  }

 private:
  std::atomic<u32> parties_{0}, arrived_{0}, sense_{0};
};

// Forks n workers; each runs fn(worker_index) and exits with its return value.
// Returns the exit code of every worker (128+signo for abnormal deaths).
std::vector<int> spawn_workers(int n, const std::function<int(int)>& fn);

enum class KeyDist { distinct, shared, zipf };

struct Scenario {
  std::string name;  // distinct-insert | same-key-insert | shared-cold-fill
  int process_count = 4;
  u64 ops_per_process = 10000;  // rounds, for the per-round scenarios
  KeyDist dist = KeyDist::distinct;
  u64 delay_ns = 0;  // injected before every CAS in workers
  u64 seed = 1;
  u64 duration_cap_s = 120;  // workers abort past this; the oracle then fails
  u64 bucket_count = 1 << 18;
  u64 pool_len = 64ull << 20;
  std::string image_path;  // recreated from scratch
};

struct RunReport {
  std::string scenario;
  bool ok = false;
  double elapsed_s = 0;
  u64 ops = 0;
  u64 lost_updates = 0;
  u64 corrupt_entries = 0;
  // Overlay instrumentation (shared counters at join time).
  u64 inserts = 0, insert_exists = 0, lookups = 0, probes = 0;
  // Pcache instrumentation.
  u64 fills = 0, dedup_waits = 0, pending_reclaims = 0;
  u64 evict_p1 = 0, evict_p2 = 0, evict_p3 = 0;
  u64 sweep_wins = 0, sweep_losses = 0;
  std::vector<std::string> violations;
};

Result<RunReport> run_scenario(const Scenario& s);

std::string report_json(const RunReport& r);
void report_text(const RunReport& r, std::ostream& os);

enum class IoPattern { seqwrite, seqread, randwrite, randread };
Result<IoPattern> parse_pattern(const std::string& s);
const char* pattern_name(IoPattern p);

struct IoConfig {
  IoPattern pattern = IoPattern::seqwrite;
  u64 block = 4096;
  int workers = 1;
  u64 file_size = 64ull << 20;
  u64 seed = 1;
  std::string image_path;
};

struct IoReport {
  std::string pattern;
  u64 block = 0;
  int workers = 0;
  u64 file_size = 0;
  bool ok = false;
  u64 total_ops = 0;
  double elapsed_s = 0;
  double mib_s = 0;
  double p50_us = 0, p95_us = 0, p99_us = 0;
  std::vector<std::string> violations;
};

// fio-shaped synchronous workload, one file and one mount per worker.
// Throughput numbers are informational; the byte-integrity oracle gates.
Result<IoReport> bench_io(const IoConfig& cfg);

std::string report_json(const IoReport& r);
void report_text(const IoReport& r, std::ostream& os);

struct ProbeReport {
  double mean_probes = 0;
  u64 keys_per_trial = 0;
  int trials = 0;
};

// Fills fresh overlays with uniform random keys to the given load factor and
// measures the mean probe count of a successful lookup.
Result<ProbeReport> probe_stats(double load_factor, u64 bucket_count, int trials,
                                u64 seed = 1);

}  // namespace daxfs
