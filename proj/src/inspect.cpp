#include "daxfs/inspect.hpp"

#include <ostream>

#include <json.hpp>

#include "daxfs/format.hpp"
#include "daxfs/overlay.hpp"
#include "daxfs/pcache.hpp"

namespace daxfs {

using nlohmann::json;

namespace {

json super_report(const Superblock& sb) {
  json j;
  j["magic"] = sb.magic;
  j["version"] = sb.version;
  j["mode"] = mode_name(sb.mode);
  j["total_size"] = sb.total_size;
  j["base_off"] = sb.base_off;
  j["base_len"] = sb.base_len;
  j["ovl_off"] = sb.ovl_off;
  j["ovl_len"] = sb.ovl_len;
  j["pcache_off"] = sb.pcache_off;
  j["pcache_len"] = sb.pcache_len;
  j["inode_count"] = sb.inode_count;
  j["next_ino"] = sb.next_ino;
  j["backing_paths"] = sb.backing_paths;
  return j;
}

json inodes_report(const SharedRegion& rg, const Superblock& sb) {
  json arr = json::array();
  BaseImage base(rg, sb);
  for (u32 i = 1; i <= sb.inode_count; i++) {
    auto bi = base.inode(i);
    if (!bi) break;
    json j;
    j["ino"] = bi->ino;
    j["mode"] = bi->mode;
    j["uid"] = bi->uid;
    j["gid"] = bi->gid;
    j["size"] = bi->size;
    j["mtime_ns"] = bi->mtime_ns;
    j["data_off"] = bi->data_off;
    j["dirent_count"] = bi->dirent_count;
    arr.push_back(j);
  }
  return arr;
}

json dir_report(const SharedRegion& rg, const Superblock& sb, u64 ino) {
  json arr = json::array();
  BaseImage base(rg, sb);
  auto bi = base.inode(ino);
  if (bi && bi->is_dir()) {
    base.for_each_dirent(*bi, [&](const FlatDirent& de) {
      arr.push_back({{"name", de.name}, {"ino", de.ino}, {"parent", de.parent_ino}});
    });
  }
  return arr;
}

json overlay_report(SharedRegion& rg, const Superblock& sb, json* warn) {
  auto ovr = Overlay::attach(rg, sb);
  if (!ovr.ok()) {
    warn->push_back("overlay region unreadable");
    return json::object();
  }
  Overlay& ov = *ovr;
  json j;
  j["bucket_count"] = ov.bucket_count();
  j["pool_len"] = ov.pool_len();
  j["pool_alloc"] = ov.pool_consumed();
  u64 used = 0, deleted = 0;
  for (u64 i = 0; i < ov.bucket_count(); i++) {
    auto [sk, po] = ov.bucket(i);
    if (sk == 0) continue;
    if (po == 0)
      deleted++;
    else
      used++;
  }
  j["buckets_published"] = used;
  j["buckets_deleted"] = deleted;
  j["buckets_free"] = ov.bucket_count() - used - deleted;
  json fl;
  fl["inode"] = ov.free_list_len(EntryType::inode);
  fl["data"] = ov.free_list_len(EntryType::data);
  fl["dirent"] = ov.free_list_len(EntryType::dirent);
  fl["dirlist"] = ov.free_list_len(EntryType::dirlist);
  j["free_lists"] = fl;
  json st;
  st["inserts"] = ov.stat(kStInserts);
  st["insert_exists"] = ov.stat(kStInsertExists);
  st["lookups"] = ov.stat(kStLookups);
  st["lookup_hits"] = ov.stat(kStLookupHits);
  st["probes"] = ov.stat(kStProbes);
  st["deletes"] = ov.stat(kStDeletes);
  st["frees"] = ov.stat(kStFrees);
  st["allocs"] = ov.stat(kStAllocs);
  j["stats"] = st;
  return j;
}

json pcache_report(SharedRegion& rg, const Superblock& sb, json* warn) {
  auto pcr = Pcache::attach(rg, sb);
  if (!pcr.ok()) {
    warn->push_back("pcache region unreadable");
    return json::object();
  }
  Pcache& pc = *pcr;
  json j;
  j["slot_count"] = pc.slot_count();
  j["evict_hand"] = pc.hand();
  u64 nfree = 0, npending = 0, nvalid = 0, pinned = 0;
  for (u64 i = 0; i < pc.slot_count(); i++) {
    u64 w = pc.slot_word((u32)i);
    switch (slot_state(w)) {
      case kSlotFree: nfree++; break;
      case kSlotPending: npending++; break;
      case kSlotValid:
        nvalid++;
        if (slot_refcount(w) > 0) pinned++;
        break;
    }
  }
  j["free"] = nfree;
  j["pending"] = npending;
  j["valid"] = nvalid;
  j["pinned"] = pinned;
  json st;
  st["fills"] = pc.stat(kPcFills);
  st["dedup_waits"] = pc.stat(kPcDedupWaits);
  st["evict_phase1"] = pc.stat(kPcEvictP1);
  st["evict_phase2_clears"] = pc.stat(kPcEvictP2Clears);
  st["evict_phase3"] = pc.stat(kPcEvictP3);
  st["sweep_wins"] = pc.stat(kPcSweepWins);
  st["sweep_losses"] = pc.stat(kPcSweepLosses);
  j["stats"] = st;
  return j;
}

void print_flat(std::ostream& os, const std::string& prefix, const json& j) {
  if (j.is_object()) {
    for (auto& [k, v] : j.items())
      print_flat(os, prefix.empty() ? k : prefix + "." + k, v);
  } else if (j.is_array()) {
    size_t i = 0;
    for (auto& v : j) print_flat(os, prefix + "[" + std::to_string(i++) + "]", v);
  } else {
    os << prefix << ": " << j.dump() << "\n";
  }
}

}  // namespace

int inspect_image(const SharedRegion& rg, const InspectRequest& req, std::ostream& os) {
  json out;
  json warnings = json::array();
  auto sbr = read_superblock(rg);
  if (!sbr.ok()) {
    os << "error: bad superblock\n";
    return 4;
  }
  const Superblock& sb = *sbr;
  auto& mrg = const_cast<SharedRegion&>(rg);

  if (req.selector == "super") {
    out = super_report(sb);
  } else if (req.selector == "inodes") {
    out["inodes"] = inodes_report(rg, sb);
  } else if (req.selector == "dir") {
    out["dirents"] = dir_report(rg, sb, req.arg);
  } else if (req.selector == "overlay") {
    out = sb.has_overlay() ? overlay_report(mrg, sb, &warnings) : json::object();
  } else if (req.selector == "pcache") {
    out = sb.has_pcache() ? pcache_report(mrg, sb, &warnings) : json::object();
  } else if (req.selector == "bucket") {
    if (!sb.has_overlay()) {
      warnings.push_back("no overlay region");
    } else {
      auto ovr = Overlay::attach(mrg, sb);
      if (ovr.ok() && req.arg < ovr->bucket_count()) {
        auto [sk, po] = ovr->bucket(req.arg);
        out["index"] = req.arg;
        out["state_key"] = sk;
        out["used"] = (sk & 1) != 0;
        out["key"] = sk >> 1;
        out["pool_off"] = po;
      } else {
        warnings.push_back("bucket index out of range");
      }
    }
  } else {
    os << "error: unknown selector " << req.selector << "\n";
    return 2;
  }

  if (!warnings.empty()) out["warnings"] = warnings;
  if (req.json)
    os << out.dump(2) << "\n";
  else
    print_flat(os, "", out);
  return warnings.empty() ? 0 : 1;
}

}  // namespace daxfs
