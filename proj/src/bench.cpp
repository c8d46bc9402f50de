#include "daxfs/bench.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "daxfs/fs.hpp"
#include "daxfs/mkfs.hpp"
#include "daxfs/overlay.hpp"
#include "daxfs/pcache.hpp"

namespace daxfs {

using nlohmann::json;

std::vector<int> spawn_workers(int n, const std::function<int(int)>& fn) {
  std::vector<pid_t> pids(n, -1);
  for (int i = 0; i < n; i++) {
    pid_t pid = fork();
    if (pid == 0) _exit(fn(i));
    pids[i] = pid;
  }
  std::vector<int> codes(n, -1);
  for (int i = 0; i < n; i++) {
    if (pids[i] < 0) {
      codes[i] = 127;
      continue;
    }
    int st = 0;
    waitpid(pids[i], &st, 0);
    if (WIFEXITED(st))
      codes[i] = WEXITSTATUS(st);
    else if (WIFSIGNALED(st))
      codes[i] = 128 + WTERMSIG(st);
  }
  return codes;
}

namespace {

u64 now_ns() {
  return (u64)std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

u64 mix3(u64 a, u64 b, u64 c) {
  u64 buf[3] = {a, b, c};
  return fnv1a64(buf, sizeof buf);
}

// Shared control header at the front of an anonymous region; trailing space
// holds scenario-specific u64 arrays.
struct CtrlHdr {
  ShmBarrier barrier;
  std::atomic<u64> counters[8];
};
constexpr u64 kCtrlArrayOff = align_up(sizeof(CtrlHdr), 64);

u64* ctrl_array(SharedRegion& rg, u64 idx) {
  return reinterpret_cast<u64*>(rg.data() + kCtrlArrayOff) + idx;
}

void atomic_inc(u64* p) {
  std::atomic_ref<u64>(*p).fetch_add(1, std::memory_order_relaxed);
}

std::vector<u64> gen_distinct_keys(u64 n, u64 seed) {
  std::mt19937_64 rng(seed);
  std::unordered_set<u64> seen;
  seen.insert(0);
  seen.insert(key_inode(kRootIno) & kKeyMask);
  seen.insert(key_dirlist(kRootIno) & kKeyMask);
  std::vector<u64> keys;
  keys.reserve(n);
  while (keys.size() < n) {
    u64 k = rng() & kKeyMask;
    if (seen.insert(k).second) keys.push_back(k);
  }
  return keys;
}

// Checksummed inode payload for the stress scenarios: every field is a
// deterministic function of the key, so any torn or misplaced entry shows up.
PoolInode stamp_inode(u64 key) {
  u64 h = fnv1a64(&key, 8);
  PoolInode pi;
  pi.mode = (u32)(h >> 32);
  pi.uid = (u16)(h >> 16);
  pi.gid = (u16)h;
  pi.size = key;
  pi.mtime_ns = h;
  return pi;
}

bool check_inode(const PoolInode& pi, u64 key) {
  PoolInode want = stamp_inode(key);
  return pi.mode == want.mode && pi.uid == want.uid && pi.gid == want.gid &&
         pi.size == want.size && pi.mtime_ns == want.mtime_ns;
}

struct Attached {
  SharedRegion rg;
  Superblock sb;
};

Result<Attached> attach_image(const std::string& path) {
  auto rgr = SharedRegion::map_file(path, 0, false);
  if (!rgr.ok()) return rgr.err;
  Attached a;
  a.rg = std::move(*rgr);
  auto sbr = read_superblock(a.rg);
  if (!sbr.ok()) return sbr.err;
  a.sb = *sbr;
  return a;
}

Status make_scenario_image(const Scenario& s, u64 slot_count) {
  BuildManifest m;
  m.mode = MountMode::empty;
  m.bucket_count = s.bucket_count;
  m.pool_len = s.pool_len;
  m.slot_count = slot_count;
  return mkdaxfs(m, s.image_path);
}

void fill_overlay_stats(Overlay& ov, RunReport& rep) {
  // Image creation itself inserts the root inode; report worker activity only.
  rep.inserts = ov.stat(kStInserts) - 1;
  rep.insert_exists = ov.stat(kStInsertExists);
  rep.lookups = ov.stat(kStLookups);
  rep.probes = ov.stat(kStProbes);
}

void fill_pcache_stats(Pcache& pc, RunReport& rep) {
  rep.fills = pc.stat(kPcFills);
  rep.dedup_waits = pc.stat(kPcDedupWaits);
  rep.pending_reclaims = pc.stat(kPcPendingReclaims);
  rep.evict_p1 = pc.stat(kPcEvictP1);
  rep.evict_p2 = pc.stat(kPcEvictP2Clears);
  rep.evict_p3 = pc.stat(kPcEvictP3);
  rep.sweep_wins = pc.stat(kPcSweepWins);
  rep.sweep_losses = pc.stat(kPcSweepLosses);
}

Result<RunReport> run_distinct_insert(const Scenario& s) {
  RunReport rep;
  rep.scenario = s.name;
  u64 nkeys = (u64)s.process_count * s.ops_per_process;
  rep.ops = nkeys;

  auto ms = make_scenario_image(s, 0);
  if (!ms.ok()) return ms.err;
  auto keys = gen_distinct_keys(nkeys, s.seed);

  auto cr = SharedRegion::map_anon(page_align(kCtrlArrayOff + nkeys * 8));
  if (!cr.ok()) return cr.err;
  SharedRegion ctrl = std::move(*cr);
  auto* hdr = new (ctrl.data()) CtrlHdr;
  hdr->barrier.init((u32)s.process_count);
  std::memcpy(ctrl_array(ctrl, 0), keys.data(), nkeys * 8);

  u64 t0 = now_ns();
  auto codes = spawn_workers(s.process_count, [&](int w) -> int {
    alarm((unsigned)s.duration_cap_s);
    set_atomic_delay_ns(s.delay_ns);
    auto ar = attach_image(s.image_path);
    if (!ar.ok()) return 10;
    auto ovr = Overlay::attach(ar->rg, ar->sb);
    if (!ovr.ok()) return 11;
    const u64* mykeys = ctrl_array(ctrl, (u64)w * s.ops_per_process);
    hdr->barrier.wait();
    for (u64 i = 0; i < s.ops_per_process; i++) {
      u64 key = mykeys[i];
      auto out = ovr->insert(key, EntryType::inode, [&]() -> Result<u64> {
        auto off = ovr->alloc(EntryType::inode, kPoolInodeSize);
        if (!off.ok()) return off;
        ovr->write_pool_inode(*off, stamp_inode(key));
        return off;
      });
      if (!out.ok()) return 12;
      if (!out->inserted) return 13;  // distinct keys: nobody else owns this
    }
    return 0;
  });
  rep.elapsed_s = (double)(now_ns() - t0) / 1e9;
  for (int i = 0; i < s.process_count; i++)
    if (codes[i] != 0)
      rep.violations.push_back("worker " + std::to_string(i) + " exit " +
                               std::to_string(codes[i]));

  auto ar = attach_image(s.image_path);
  if (!ar.ok()) return ar.err;
  auto ovr = Overlay::attach(ar->rg, ar->sb);
  if (!ovr.ok()) return ovr.err;
  for (u64 k : keys) {
    auto po = ovr->lookup(k);
    if (!po) {
      rep.lost_updates++;
      continue;
    }
    if (!check_inode(ovr->read_pool_inode(*po), k)) rep.corrupt_entries++;
  }
  if (rep.lost_updates) rep.violations.push_back("lost updates");
  if (rep.corrupt_entries) rep.violations.push_back("corrupt pool entries");
  fill_overlay_stats(*ovr, rep);
  rep.ok = rep.violations.empty();
  return rep;
}

Result<RunReport> run_same_key_insert(const Scenario& s) {
  RunReport rep;
  rep.scenario = s.name;
  u64 rounds = s.ops_per_process;
  rep.ops = rounds * s.process_count;

  auto ms = make_scenario_image(s, 0);
  if (!ms.ok()) return ms.err;
  auto keys = gen_distinct_keys(rounds, s.seed);

  // Arrays: round keys, winner counts, exists counts.
  auto cr = SharedRegion::map_anon(page_align(kCtrlArrayOff + rounds * 3 * 8));
  if (!cr.ok()) return cr.err;
  SharedRegion ctrl = std::move(*cr);
  auto* hdr = new (ctrl.data()) CtrlHdr;
  hdr->barrier.init((u32)s.process_count);
  std::memcpy(ctrl_array(ctrl, 0), keys.data(), rounds * 8);

  u64 t0 = now_ns();
  auto codes = spawn_workers(s.process_count, [&](int w) -> int {
    (void)w;
    alarm((unsigned)s.duration_cap_s);
    set_atomic_delay_ns(s.delay_ns);
    auto ar = attach_image(s.image_path);
    if (!ar.ok()) return 10;
    auto ovr = Overlay::attach(ar->rg, ar->sb);
    if (!ovr.ok()) return 11;
    for (u64 r = 0; r < rounds; r++) {
      u64 key = ctrl_array(ctrl, r)[0];
      hdr->barrier.wait();
      auto out = ovr->insert(key, EntryType::inode, [&]() -> Result<u64> {
        auto off = ovr->alloc(EntryType::inode, kPoolInodeSize);
        if (!off.ok()) return off;
        ovr->write_pool_inode(*off, stamp_inode(key));
        return off;
      });
      if (!out.ok()) return 12;
      atomic_inc(ctrl_array(ctrl, rounds + r * 2 + (out->inserted ? 0 : 1)));
    }
    return 0;
  });
  rep.elapsed_s = (double)(now_ns() - t0) / 1e9;
  for (int i = 0; i < s.process_count; i++)
    if (codes[i] != 0)
      rep.violations.push_back("worker " + std::to_string(i) + " exit " +
                               std::to_string(codes[i]));

  for (u64 r = 0; r < rounds; r++) {
    u64 winners = ctrl_array(ctrl, rounds + r * 2)[0];
    u64 losers = ctrl_array(ctrl, rounds + r * 2 + 1)[0];
    if (winners != 1 || losers != (u64)s.process_count - 1) {
      rep.lost_updates++;
      if (rep.violations.size() < 20)
        rep.violations.push_back("round " + std::to_string(r) + ": " +
                                 std::to_string(winners) + " winners, " +
                                 std::to_string(losers) + " losers");
    }
  }

  auto ar = attach_image(s.image_path);
  if (!ar.ok()) return ar.err;
  auto ovr = Overlay::attach(ar->rg, ar->sb);
  if (!ovr.ok()) return ovr.err;
  for (u64 k : keys) {
    auto po = ovr->lookup(k);
    if (!po || !check_inode(ovr->read_pool_inode(*po), k)) rep.corrupt_entries++;
  }
  if (rep.corrupt_entries) rep.violations.push_back("corrupt winner entries");
  fill_overlay_stats(*ovr, rep);
  rep.ok = rep.violations.empty();
  return rep;
}

void fill_page_pattern(u8* dst, u64 tag) {
  u64 base = fnv1a64(&tag, 8);
  for (u64 j = 0; j < kPageSize / 8; j++) {
    u64 v = base + j;
    std::memcpy(dst + j * 8, &v, 8);
  }
}

Result<RunReport> run_shared_cold_fill(const Scenario& s) {
  RunReport rep;
  rep.scenario = s.name;
  u64 rounds = s.ops_per_process;
  rep.ops = rounds * s.process_count;

  auto ms = make_scenario_image(s, /*slot_count=*/256);
  if (!ms.ok()) return ms.err;

  // Arrays: per-round backing-read counts, then per-round/per-worker page
  // checksums.
  u64 ncsum = rounds * (u64)s.process_count;
  auto cr = SharedRegion::map_anon(page_align(kCtrlArrayOff + (rounds + ncsum) * 8));
  if (!cr.ok()) return cr.err;
  SharedRegion ctrl = std::move(*cr);
  auto* hdr = new (ctrl.data()) CtrlHdr;
  hdr->barrier.init((u32)s.process_count);

  u64 t0 = now_ns();
  auto codes = spawn_workers(s.process_count, [&](int w) -> int {
    alarm((unsigned)s.duration_cap_s);
    set_atomic_delay_ns(s.delay_ns);
    auto ar = attach_image(s.image_path);
    if (!ar.ok()) return 10;
    auto pcr = Pcache::attach(ar->rg, ar->sb);
    if (!pcr.ok()) return 11;
    for (u64 r = 0; r < rounds; r++) {
      u64 tag = r + 1;
      hdr->barrier.wait();
      auto slot = pcr->get(tag, [&](std::span<u8, kPageSize> dst) -> Status {
        atomic_inc(ctrl_array(ctrl, r));  // one backing read
        fill_page_pattern(dst.data(), tag);
        return ok_status();
      });
      if (!slot.ok()) return 12;
      u64 csum = fnv1a64(pcr->slot_data(*slot), kPageSize);
      ctrl_array(ctrl, rounds + r * (u64)s.process_count + w)[0] = csum;
      pcr->put(*slot);
      hdr->barrier.wait();
    }
    return 0;
  });
  rep.elapsed_s = (double)(now_ns() - t0) / 1e9;
  for (int i = 0; i < s.process_count; i++)
    if (codes[i] != 0)
      rep.violations.push_back("worker " + std::to_string(i) + " exit " +
                               std::to_string(codes[i]));

  std::vector<u8> page(kPageSize);
  for (u64 r = 0; r < rounds; r++) {
    u64 reads = ctrl_array(ctrl, r)[0];
    if (reads != 1) {
      rep.lost_updates++;
      if (rep.violations.size() < 20)
        rep.violations.push_back("round " + std::to_string(r) + ": " +
                                 std::to_string(reads) + " backing reads");
    }
    fill_page_pattern(page.data(), r + 1);
    u64 want = fnv1a64(page.data(), kPageSize);
    for (int w = 0; w < s.process_count; w++) {
      u64 got = ctrl_array(ctrl, rounds + r * (u64)s.process_count + w)[0];
      if (got != want) rep.corrupt_entries++;
    }
  }
  if (rep.corrupt_entries) rep.violations.push_back("page byte divergence");

  auto ar = attach_image(s.image_path);
  if (!ar.ok()) return ar.err;
  auto pcr = Pcache::attach(ar->rg, ar->sb);
  if (!pcr.ok()) return pcr.err;
  fill_pcache_stats(*pcr, rep);
  rep.ok = rep.violations.empty();
  return rep;
}

}  // namespace

Result<RunReport> run_scenario(const Scenario& s) {
  if (s.image_path.empty() || s.process_count < 1 || s.ops_per_process < 1)
    return Errc::invalid;
  if (s.name == "distinct-insert") return run_distinct_insert(s);
  if (s.name == "same-key-insert") return run_same_key_insert(s);
  if (s.name == "shared-cold-fill") return run_shared_cold_fill(s);
  return Errc::invalid;
}

std::string report_json(const RunReport& r) {
  json j;
  j["scenario"] = r.scenario;
  j["ok"] = r.ok;
  j["elapsed_s"] = r.elapsed_s;
  j["ops"] = r.ops;
  j["lost_updates"] = r.lost_updates;
  j["corrupt_entries"] = r.corrupt_entries;
  j["overlay"] = {{"inserts", r.inserts},
                  {"insert_exists", r.insert_exists},
                  {"lookups", r.lookups},
                  {"probes", r.probes}};
  j["pcache"] = {{"fills", r.fills},
                 {"dedup_waits", r.dedup_waits},
                 {"pending_reclaims", r.pending_reclaims},
                 {"evict_p1", r.evict_p1},
                 {"evict_p2_clears", r.evict_p2},
                 {"evict_p3", r.evict_p3},
                 {"sweep_wins", r.sweep_wins},
                 {"sweep_losses", r.sweep_losses}};
  j["violations"] = r.violations;
  return j.dump(2);
}

void report_text(const RunReport& r, std::ostream& os) {
  os << "scenario: " << r.scenario << "\n"
     << "ok: " << (r.ok ? "true" : "false") << "\n"
     << "elapsed_s: " << r.elapsed_s << "\n"
     << "ops: " << r.ops << "\n"
     << "lost_updates: " << r.lost_updates << "\n"
     << "corrupt_entries: " << r.corrupt_entries << "\n"
     << "overlay.inserts: " << r.inserts << "\n"
     << "overlay.insert_exists: " << r.insert_exists << "\n"
     << "overlay.lookups: " << r.lookups << "\n"
     << "overlay.probes: " << r.probes << "\n"
     << "pcache.fills: " << r.fills << "\n"
     << "pcache.dedup_waits: " << r.dedup_waits << "\n"
     << "pcache.sweep_wins: " << r.sweep_wins << "\n";
  for (const auto& v : r.violations) os << "violation: " << v << "\n";
}

// --- io benchmark ---

Result<IoPattern> parse_pattern(const std::string& s) {
  if (s == "seqwrite") return IoPattern::seqwrite;
  if (s == "seqread") return IoPattern::seqread;
  if (s == "randwrite") return IoPattern::randwrite;
  if (s == "randread") return IoPattern::randread;
  return Errc::invalid;
}

const char* pattern_name(IoPattern p) {
  switch (p) {
    case IoPattern::seqwrite: return "seqwrite";
    case IoPattern::seqread: return "seqread";
    case IoPattern::randwrite: return "randwrite";
    case IoPattern::randread: return "randread";
  }
  return "?";
}

namespace {

// Page p of worker w at stamp version v (0 = prefill) has a fully
// deterministic byte pattern.
void io_fill_page(u8* dst, u64 w, u64 page, u64 stamp) {
  u64 base = mix3(w, page, stamp);
  for (u64 j = 0; j < kPageSize / 8; j++) {
    u64 v = base + j;
    std::memcpy(dst + j * 8, &v, 8);
  }
}

bool io_check_page(const u8* src, u64 w, u64 page, u64 stamp) {
  u64 base = mix3(w, page, stamp);
  for (u64 j = 0; j < kPageSize / 8; j++) {
    u64 v;
    std::memcpy(&v, src + j * 8, 8);
    if (v != base + j) return false;
  }
  return true;
}

std::string worker_file(int w) { return "/w" + std::to_string(w); }

double percentile(std::vector<u64>& sorted_ns, double p) {
  if (sorted_ns.empty()) return 0;
  size_t i = (size_t)(p * (double)(sorted_ns.size() - 1));
  return (double)sorted_ns[i] / 1000.0;  // µs
}

}  // namespace

Result<IoReport> bench_io(const IoConfig& cfg) {
  IoReport rep;
  rep.pattern = pattern_name(cfg.pattern);
  rep.block = cfg.block;
  rep.workers = cfg.workers;
  rep.file_size = cfg.file_size;
  if (cfg.image_path.empty() || cfg.workers < 1 || cfg.block == 0 ||
      cfg.block % kPageSize != 0 || cfg.file_size % cfg.block != 0)
    return Errc::invalid;

  u64 pages = cfg.file_size / kPageSize;
  u64 ops_each = cfg.file_size / cfg.block;
  u64 total_pages = pages * (u64)cfg.workers;

  BuildManifest m;
  m.mode = MountMode::empty;
  u64 buckets = 1 << 16;
  while (buckets < total_pages * 4) buckets <<= 1;
  m.bucket_count = buckets;
  m.pool_len = (u64)cfg.workers * cfg.file_size + (64ull << 20);
  m.slot_count = 64;
  auto ms = mkdaxfs(m, cfg.image_path);
  if (!ms.ok()) return ms.err;

  bool is_write = cfg.pattern == IoPattern::seqwrite || cfg.pattern == IoPattern::randwrite;
  bool prefill = cfg.pattern != IoPattern::seqwrite;

  {
    auto mr = Mount::open(cfg.image_path);
    if (!mr.ok()) return mr.err;
    Mount& mnt = **mr;
    std::vector<u8> buf(1 << 20);
    for (int w = 0; w < cfg.workers; w++) {
      auto ir = mnt.create(worker_file(w));
      if (!ir.ok()) return ir.err;
      if (!prefill) continue;
      for (u64 off = 0; off < cfg.file_size; off += buf.size()) {
        u64 len = std::min<u64>(buf.size(), cfg.file_size - off);
        for (u64 p = 0; p < len / kPageSize; p++)
          io_fill_page(buf.data() + p * kPageSize, (u64)w,
                       off / kPageSize + p, 0);
        auto wr = mnt.write(*ir, off, std::span<const u8>(buf.data(), len));
        if (!wr.ok()) return wr.err;
      }
    }
  }

  // Control: start/end ns per worker, latencies, final randwrite stamps.
  u64 lat_off = 2 * (u64)cfg.workers;
  u64 stamp_off = lat_off + ops_each * (u64)cfg.workers;
  u64 words = stamp_off + total_pages;
  auto cr = SharedRegion::map_anon(page_align(kCtrlArrayOff + words * 8));
  if (!cr.ok()) return cr.err;
  SharedRegion ctrl = std::move(*cr);
  auto* hdr = new (ctrl.data()) CtrlHdr;
  hdr->barrier.init((u32)cfg.workers);

  auto codes = spawn_workers(cfg.workers, [&](int w) -> int {
    alarm(300);
    auto mr = Mount::open(cfg.image_path);
    if (!mr.ok()) return 10;
    Mount& mnt = **mr;
    auto ir = mnt.resolve(worker_file(w));
    if (!ir.ok()) return 11;
    u64 ino = *ir;
    std::vector<u8> buf(cfg.block);
    std::vector<u64> last_stamp(pages, 0);
    std::mt19937_64 rng(cfg.seed * 7919 + (u64)w);
    u64* lat = ctrl_array(ctrl, lat_off + (u64)w * ops_each);
    hdr->barrier.wait();
    u64 t0 = now_ns();
    for (u64 i = 0; i < ops_each; i++) {
      u64 off;
      if (cfg.pattern == IoPattern::seqwrite || cfg.pattern == IoPattern::seqread)
        off = i * cfg.block;
      else
        off = (rng() % ops_each) * cfg.block;
      u64 page0 = off / kPageSize;
      u64 op_t0 = now_ns();
      if (is_write) {
        u64 stamp = cfg.pattern == IoPattern::seqwrite ? 1 : i + 1;
        for (u64 p = 0; p < cfg.block / kPageSize; p++) {
          io_fill_page(buf.data() + p * kPageSize, (u64)w, page0 + p, stamp);
          last_stamp[page0 + p] = stamp;
        }
        auto wr = mnt.write(ino, off, std::span<const u8>(buf.data(), buf.size()));
        if (!wr.ok() || *wr != cfg.block) return 12;
      } else {
        auto rr = mnt.read(ino, off, std::span<u8>(buf.data(), buf.size()));
        if (!rr.ok() || *rr != cfg.block) return 13;
        for (u64 p = 0; p < cfg.block / kPageSize; p++)
          if (!io_check_page(buf.data() + p * kPageSize, (u64)w, page0 + p, 0))
            return 14;
      }
      lat[i] = now_ns() - op_t0;
    }
    u64 t1 = now_ns();
    ctrl_array(ctrl, (u64)w)[0] = t0;
    ctrl_array(ctrl, (u64)cfg.workers + w)[0] = t1;
    std::memcpy(ctrl_array(ctrl, stamp_off + (u64)w * pages), last_stamp.data(),
                pages * 8);
    return 0;
  });

  for (int i = 0; i < cfg.workers; i++)
    if (codes[i] != 0)
      rep.violations.push_back("worker " + std::to_string(i) + " exit " +
                               std::to_string(codes[i]));

  // Byte-integrity oracle for the write patterns.
  if (is_write && rep.violations.empty()) {
    auto mr = Mount::open(cfg.image_path);
    if (!mr.ok()) return mr.err;
    Mount& mnt = **mr;
    std::vector<u8> page(kPageSize);
    for (int w = 0; w < cfg.workers; w++) {
      auto ir = mnt.resolve(worker_file(w));
      if (!ir.ok()) return ir.err;
      const u64* stamps = ctrl_array(ctrl, stamp_off + (u64)w * pages);
      for (u64 p = 0; p < pages; p++) {
        u64 stamp = stamps[p];
        if (stamp == 0 && !prefill) continue;  // seqwrite covers every page
        auto rr = mnt.read(*ir, p * kPageSize, std::span<u8>(page.data(), kPageSize));
        if (!rr.ok() || *rr != kPageSize) {
          rep.violations.push_back("short read w" + std::to_string(w) + " page " +
                                   std::to_string(p));
          continue;
        }
        if (!io_check_page(page.data(), (u64)w, p, stamp)) {
          rep.violations.push_back("stamp mismatch w" + std::to_string(w) +
                                   " page " + std::to_string(p));
          if (rep.violations.size() > 20) break;
        }
      }
    }
  }

  u64 start = ~0ull, end = 0, lat_n = 0;
  std::vector<u64> lats;
  lats.reserve(ops_each * (u64)cfg.workers);
  for (int w = 0; w < cfg.workers; w++) {
    if (codes[w] != 0) continue;
    start = std::min(start, ctrl_array(ctrl, (u64)w)[0]);
    end = std::max(end, ctrl_array(ctrl, (u64)cfg.workers + w)[0]);
    const u64* lat = ctrl_array(ctrl, lat_off + (u64)w * ops_each);
    lats.insert(lats.end(), lat, lat + ops_each);
    lat_n += ops_each;
  }
  rep.total_ops = lat_n;
  if (end > start && lat_n) {
    rep.elapsed_s = (double)(end - start) / 1e9;
    rep.mib_s = (double)(lat_n * cfg.block) / (1 << 20) / rep.elapsed_s;
    std::sort(lats.begin(), lats.end());
    rep.p50_us = percentile(lats, 0.50);
    rep.p95_us = percentile(lats, 0.95);
    rep.p99_us = percentile(lats, 0.99);
  }
  rep.ok = rep.violations.empty();
  return rep;
}

std::string report_json(const IoReport& r) {
  json j;
  j["pattern"] = r.pattern;
  j["block"] = r.block;
  j["workers"] = r.workers;
  j["file_size"] = r.file_size;
  j["ok"] = r.ok;
  j["total_ops"] = r.total_ops;
  j["elapsed_s"] = r.elapsed_s;
  j["mib_s"] = r.mib_s;
  j["p50_us"] = r.p50_us;
  j["p95_us"] = r.p95_us;
  j["p99_us"] = r.p99_us;
  j["violations"] = r.violations;
  return j.dump(2);
}

void report_text(const IoReport& r, std::ostream& os) {
  os << "pattern: " << r.pattern << "\n"
     << "block: " << r.block << "\n"
     << "workers: " << r.workers << "\n"
     << "file_size: " << r.file_size << "\n"
     << "ok: " << (r.ok ? "true" : "false") << "\n"
     << "total_ops: " << r.total_ops << "\n"
     << "elapsed_s: " << r.elapsed_s << "\n"
     << "mib_s: " << r.mib_s << "\n"
     << "p50_us: " << r.p50_us << "\n"
     << "p95_us: " << r.p95_us << "\n"
     << "p99_us: " << r.p99_us << "\n";
  for (const auto& v : r.violations) os << "violation: " << v << "\n";
}

// --- probe statistics ---

Result<ProbeReport> probe_stats(double load_factor, u64 bucket_count, int trials,
                                u64 seed) {
  if (load_factor <= 0 || load_factor >= 1 || bucket_count == 0 || trials < 1)
    return Errc::invalid;
  u64 n = (u64)((double)bucket_count * load_factor);
  if (n == 0) n = 1;

  ProbeReport rep;
  rep.keys_per_trial = n;
  rep.trials = trials;
  double sum_means = 0;
  for (int t = 0; t < trials; t++) {
    LayoutConfig cfg;
    cfg.mode = MountMode::empty;
    cfg.bucket_count = bucket_count;
    cfg.pool_len = page_align(n * kPoolInodeSize + kPageSize);
    auto sbr = layout(cfg);
    if (!sbr.ok()) return sbr.err;
    auto rgr = SharedRegion::map_anon(sbr->total_size);
    if (!rgr.ok()) return rgr.err;
    SharedRegion rg = std::move(*rgr);
    auto ws = write_superblock(rg, *sbr);
    if (!ws.ok()) return ws.err;
    auto fs = Overlay::format(rg, *sbr, bucket_count, cfg.pool_len);
    if (!fs.ok()) return fs.err;
    auto ovr = Overlay::attach(rg, *sbr);
    if (!ovr.ok()) return ovr.err;

    auto keys = gen_distinct_keys(n, seed + (u64)t * 1000003);
    for (u64 k : keys) {
      auto out = ovr->insert(k, EntryType::inode, [&]() -> Result<u64> {
        auto off = ovr->alloc(EntryType::inode, kPoolInodeSize);
        if (!off.ok()) return off;
        ovr->write_pool_inode(*off, PoolInode{});
        return off;
      });
      if (!out.ok() || !out->inserted) return Errc::invalid;
    }
    u64 total_probes = 0;
    for (u64 k : keys) {
      u64 probes = 0;
      if (!ovr->lookup(k, &probes)) return Errc::invalid;
      total_probes += probes;
    }
    sum_means += (double)total_probes / (double)n;
  }
  rep.mean_probes = sum_means / trials;
  return rep;
}

}  // namespace daxfs
