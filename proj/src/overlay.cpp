#include "daxfs/overlay.hpp"

#include <chrono>
#include <cstring>
#include <thread>
#include <unordered_set>

namespace daxfs {

namespace {

constexpr u64 kOffMask48 = 0x0000FFFFFFFFFFFFull;

u64 get64(const u8* p) {
  u64 v;
  std::memcpy(&v, p, 8);
  return v;
}
void put64(u8* p, u64 v) { std::memcpy(p, &v, 8); }
u32 get32(const u8* p) {
  u32 v;
  std::memcpy(&v, p, 4);
  return v;
}
void put32(u8* p, u32 v) { std::memcpy(p, &v, 4); }
u16 get16(const u8* p) {
  u16 v;
  std::memcpy(&v, p, 2);
  return v;
}

}  // namespace

u64 key_dirent(u64 parent_ino, std::string_view name) {
  u8 buf[8];
  put64(buf, parent_ino);
  u64 h = fnv1a64(buf, 8);
  h = fnv1a64(name.data(), name.size(), h);
  return h & kKeyMask;
}

u64 entry_size(EntryType t) {
  switch (t) {
    case EntryType::inode: return kPoolInodeSize;
    case EntryType::data: return kPageSize;
    case EntryType::dirent: return kPoolDirentSize;
    case EntryType::dirlist: return kPoolDirlistSize;
  }
  return 0;
}

u64 entry_align(EntryType t) { return t == EntryType::data ? kPageSize : 8; }

bool valid_entry_name(std::string_view name) {
  if (name.empty() || name.size() > kMaxNameLen) return false;
  for (char c : name)
    if (c == '/' || c == '\0') return false;
  return true;
}

Status Overlay::format(SharedRegion& rg, const Superblock& sb, u64 bucket_count,
                       u64 pool_len) {
  if (!sb.has_overlay() || bucket_count == 0) return Errc::invalid;
  u64 meta = page_align(kPageSize + bucket_count * kOvlBucketSize);
  if (meta + pool_len > sb.ovl_len) return Errc::invalid;
  u8* h = rg.data() + sb.ovl_off;
  std::memset(h, 0, kPageSize);
  put64(h + ovh_off::magic, kOverlayMagic);
  put64(h + ovh_off::bucket_count, bucket_count);
  put64(h + ovh_off::pool_len, pool_len);
  // bucket array and pool are already zero in a fresh mapping; formatting an
  // in-place reused region clears them explicitly
  std::memset(rg.data() + sb.ovl_off + kPageSize, 0, meta - kPageSize);
  return ok_status();
}

Result<Overlay> Overlay::attach(SharedRegion& rg, const Superblock& sb) {
  if (!sb.has_overlay()) return Errc::invalid;
  // Overflow-safe geometry checks: the header may be hostile.
  if (sb.ovl_off % kPageSize || sb.ovl_off > rg.size() ||
      sb.ovl_len > rg.size() - sb.ovl_off)
    return Errc::bad_format;
  Overlay ov;
  ov.rg_ = &rg;
  ov.hdr_ = sb.ovl_off;
  const u8* h = rg.data() + sb.ovl_off;
  if (get64(h + ovh_off::magic) != kOverlayMagic) return Errc::bad_format;
  ov.buckets_ = get64(h + ovh_off::bucket_count);
  ov.pool_len_ = get64(h + ovh_off::pool_len);
  ov.bucket_base_ = sb.ovl_off + kPageSize;
  if (ov.buckets_ == 0 || ov.buckets_ > sb.ovl_len / kOvlBucketSize)
    return Errc::bad_format;
  u64 meta = page_align(kPageSize + ov.buckets_ * kOvlBucketSize);
  ov.pool_base_ = sb.ovl_off + meta;
  if (meta > sb.ovl_len || ov.pool_len_ > sb.ovl_len - meta) return Errc::bad_format;
  return ov;
}

std::pair<u64, u64> Overlay::bucket(u64 idx) const {
  u64 off = bucket_off(idx);
  return {rg_->load64_relaxed(off), rg_->load64_relaxed(off + 8)};
}

u64 Overlay::await_publish(u64 pooloff_word) const {
  u64 po = rg_->load64_acquire(pooloff_word);
  if (po) return po;
  auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(1);
  while (std::chrono::steady_clock::now() < deadline) {
    po = rg_->load64_acquire(pooloff_word);
    if (po) return po;
  }
  return 0;
}

Result<Overlay::InsertOutcome> Overlay::insert(u64 key, EntryType type,
                                               const Publish& publish,
                                               const Verify& verify) {
  key &= kKeyMask;
  u64 home = key % buckets_;
  for (u64 i = 0; i < buckets_; i++) {
    u64 idx = (home + i) % buckets_;
    u64 sk_off = bucket_off(idx);
    u64 po_off = sk_off + 8;
    for (;;) {
      u64 sk = rg_->load64_acquire(sk_off);
      if (sk == 0) {
        auto [won, obs] = rg_->cas64(sk_off, 0, (key << 1) | 1);
        if (!won) continue;  // re-read the same bucket
        auto r = publish();
        if (!r.ok()) return r.err;  // bucket stays USED with pool_off=0; a
                                    // later same-key insert can revive it
        SharedRegion::write_fence();
        auto [pwon, pobs] = rg_->cas64(po_off, 0, *r);
        if (pwon) {
          bump(kStInserts);
          bump(kStProbes, i + 1);
          return InsertOutcome{true, *r};
        }
        // A concurrent same-key insert treated the unpublished bucket as
        // deleted and revived it first.
        free_entry(type, *r);
        bump(kStInsertExists);
        return InsertOutcome{false, pobs};
      }
      if ((sk >> 1) == key) {
        u64 po = await_publish(po_off);
        if (po != 0) {
          if (verify && !verify(po)) break;  // hash-equal but different entry
          bump(kStInsertExists);
          bump(kStProbes, i + 1);
          return InsertOutcome{false, po};
        }
        // Deleted sentinel: reuse the bucket by CASing pool_off 0 -> new.
        auto r = publish();
        if (!r.ok()) return r.err;
        SharedRegion::write_fence();
        auto [pwon, pobs] = rg_->cas64(po_off, 0, *r);
        if (pwon) {
          bump(kStInserts);
          return InsertOutcome{true, *r};
        }
        free_entry(type, *r);
        bump(kStInsertExists);
        return InsertOutcome{false, pobs};
      }
      break;  // other key: advance to the next bucket
    }
  }
  return Errc::no_space;  // table full
}

std::optional<u64> Overlay::lookup(u64 key, u64* probes, const Verify& verify) const {
  key &= kKeyMask;
  u64 home = key % buckets_;
  bump(kStLookups);
  for (u64 i = 0; i < buckets_; i++) {
    u64 idx = (home + i) % buckets_;
    u64 sk = rg_->load64_acquire(bucket_off(idx));
    if (sk == 0) {
      if (probes) *probes = i + 1;
      return std::nullopt;  // a FREE bucket terminates the probe
    }
    if ((sk >> 1) == key) {
      u64 po = await_publish(bucket_off(idx) + 8);
      if (po == 0) {
        if (probes) *probes = i + 1;
        return std::nullopt;  // deleted sentinel
      }
      if (verify && !verify(po)) continue;
      if (probes) *probes = i + 1;
      bump(kStLookupHits);
      return po;
    }
  }
  if (probes) *probes = buckets_;
  return std::nullopt;
}

std::optional<u64> Overlay::bucket_index_of(u64 key, const Verify& verify) const {
  key &= kKeyMask;
  u64 home = key % buckets_;
  for (u64 i = 0; i < buckets_; i++) {
    u64 idx = (home + i) % buckets_;
    u64 sk = rg_->load64_relaxed(bucket_off(idx));
    if (sk == 0) return std::nullopt;
    if ((sk >> 1) == key) {
      if (verify) {
        u64 po = rg_->load64_acquire(bucket_off(idx) + 8);
        if (po && !verify(po)) continue;
      }
      return idx;
    }
  }
  return std::nullopt;
}

Result<u64> Overlay::erase(u64 key, EntryType type) {
  key &= kKeyMask;
  u64 home = key % buckets_;
  for (u64 i = 0; i < buckets_; i++) {
    u64 idx = (home + i) % buckets_;
    u64 sk = rg_->load64_acquire(bucket_off(idx));
    if (sk == 0) return Errc::not_found;
    if ((sk >> 1) != key) continue;
    u64 po_off = bucket_off(idx) + 8;
    for (;;) {
      u64 po = rg_->load64_acquire(po_off);
      if (po == 0) return Errc::not_found;  // already deleted (or in flight)
      auto [won, obs] = rg_->cas64(po_off, po, 0);
      if (won) {
        free_entry(type, po);
        bump(kStDeletes);
        return po;
      }
      (void)obs;
    }
  }
  return Errc::not_found;
}

Result<u64> Overlay::alloc(EntryType type, u64 size) {
  // LIFO pop from the per-type free list; tagged head defeats ABA.
  u64 head_off = hdr_ + ovh_off::free_heads + 8 * ((u64)type - 1);
  for (;;) {
    u64 h = rg_->load64_acquire(head_off);
    u64 off = h & kOffMask48;
    if (off == 0) break;
    u64 next = rg_->load64_acquire(off);  // first 8 bytes hold next-free
    u64 gen = (h >> 48) + 1;
    auto [won, obs] = rg_->cas64(head_off, h, (gen << 48) | (next & kOffMask48));
    if (won) {
      bump(kStAllocs);
      return off;
    }
    (void)obs;
  }
  return alloc_batch(type, size, 1);
}

Result<u64> Overlay::alloc_batch(EntryType type, u64 size, u64 n) {
  if (n == 0 || size == 0) return Errc::invalid;
  u64 align = entry_align(type);
  u64 cursor_off = hdr_ + ovh_off::pool_alloc;
  for (;;) {
    u64 cur = rg_->load64_acquire(cursor_off);
    u64 aligned = align_up(pool_base_ + cur, align) - pool_base_;
    u64 end = aligned + size * n;
    if (end > pool_len_ || end < aligned) return Errc::no_space;
    auto [won, obs] = rg_->cas64(cursor_off, cur, end);
    if (won) {
      bump(kStAllocs, n);
      return pool_base_ + aligned;
    }
    (void)obs;
  }
}

void Overlay::free_entry(EntryType type, u64 pool_off) {
  u64 head_off = hdr_ + ovh_off::free_heads + 8 * ((u64)type - 1);
  for (;;) {
    u64 h = rg_->load64_acquire(head_off);
    rg_->store64_relaxed(pool_off, h & kOffMask48);
    SharedRegion::write_fence();
    u64 gen = (h >> 48) + 1;
    auto [won, obs] = rg_->cas64(head_off, h, (gen << 48) | (pool_off & kOffMask48));
    if (won) {
      bump(kStFrees);
      return;
    }
    (void)obs;
  }
}

u64 Overlay::free_head(EntryType t) const {
  return rg_->load64_relaxed(hdr_ + ovh_off::free_heads + 8 * ((u64)t - 1)) & kOffMask48;
}

u64 Overlay::free_list_len(EntryType t) const {
  u64 n = 0;
  u64 off = free_head(t);
  u64 cap = pool_len_ / 8 + 1;
  while (off != 0 && n < cap) {
    n++;
    off = rg_->load64_relaxed(off) & kOffMask48;
  }
  return n;
}

// --- pool entry codecs ---

PoolInode Overlay::read_pool_inode(u64 pool_off) const {
  const u8* p = rg_->data() + pool_off;
  PoolInode pi;
  pi.mode = get32(p + 8);
  pi.uid = get16(p + 12);
  pi.gid = get16(p + 14);
  pi.size = rg_->load64_acquire(pool_off + kPoolInodeSizeOff);
  pi.mtime_ns = get64(p + 24);
  return pi;
}

void Overlay::write_pool_inode(u64 pool_off, const PoolInode& pi) {
  u8* p = rg_->data() + pool_off;
  put64(p + 0, (u64)EntryType::inode);
  put32(p + 8, pi.mode);
  std::memcpy(p + 12, &pi.uid, 2);
  std::memcpy(p + 14, &pi.gid, 2);
  put64(p + 16, pi.size);
  put64(p + 24, pi.mtime_ns);
}

PoolDirent Overlay::read_dirent(u64 pool_off) const {
  const u8* p = rg_->data() + pool_off;
  PoolDirent de;
  de.next_off = rg_->load64_acquire(pool_off + 8);
  de.parent_ino = get64(p + 16);
  de.target_ino = get64(p + 24);
  de.mode = get32(p + 32);
  de.tombstone = (rg_->load32_relaxed(pool_off + 36) & 1) != 0;
  u16 nl = get16(p + 40);
  if (nl > kMaxNameLen) nl = kMaxNameLen;
  de.name.assign((const char*)p + 42, nl);
  return de;
}

namespace {
constexpr u64 kDirentFlagsOff = 36;   // u32 flags; bit 0 = tombstone
constexpr u64 kDirentModeWordOff = 32;  // u64 word covering mode+flags
}  // namespace

// --- directory operations ---

Result<u64> Overlay::dirent_add(u64 parent_ino, std::string_view name,
                                u64 target_ino, u32 mode, const BaseImage* base,
                                bool as_tombstone) {
  if (!valid_entry_name(name)) return Errc::invalid;

  auto existing = dirent_resolve(parent_ino, name);
  if (existing && !existing->tombstone) return Errc::exists;
  if (!existing && !as_tombstone && base && base->present() &&
      base->find_dirent(parent_ino, name))
    return Errc::exists;

  // Ensure the per-directory list head exists.
  auto dl = insert(key_dirlist(parent_ino), EntryType::dirlist, [&]() -> Result<u64> {
    auto off = alloc(EntryType::dirlist, kPoolDirlistSize);
    if (!off.ok()) return off;
    u8* p = rg_->data() + *off;
    put64(p, (u64)EntryType::dirlist);
    rg_->store64_relaxed(*off + 8, 0);
    return off;
  });
  if (!dl.ok()) return dl.err;
  u64 dirlist_off = dl->pool_off;

  auto deo = alloc(EntryType::dirent, kPoolDirentSize);
  if (!deo.ok()) return deo.err;
  u64 de_off = *deo;
  {
    u8* p = rg_->data() + de_off;
    std::memset(p, 0, kPoolDirentSize);
    put64(p + 0, (u64)EntryType::dirent);
    put64(p + 16, parent_ino);
    put64(p + 24, target_ino);
    put32(p + 32, mode);
    put32(p + 36, as_tombstone ? 1u : 0u);
    u16 nl = (u16)name.size();
    std::memcpy(p + 40, &nl, 2);
    std::memcpy(p + 42, name.data(), name.size());
  }

  // Link at the chain head before publishing into the hash.
  u64 head_word = dirlist_off + 8;
  for (;;) {
    u64 head = rg_->load64_acquire(head_word);
    rg_->store64_relaxed(de_off + 8, head);
    SharedRegion::write_fence();
    auto [won, obs] = rg_->cas64(head_word, head, de_off);
    if (won) break;
    (void)obs;
  }

  auto self_check = [&](u64 po) {
    PoolDirent d = read_dirent(po);
    return d.parent_ino == parent_ino && d.name == name;
  };
  u64 dkey = key_dirent(parent_ino, name);
  for (;;) {
    auto out = insert(dkey, EntryType::dirent, [&]() -> Result<u64> { return de_off; },
                      self_check);
    if (!out.ok()) return out.err;
    if (out->inserted) return de_off;

    // Key already published.  Tombstoned entries get revived by swapping the
    // bucket's pool_off; a live entry means we lost a same-name race.
    u64 other = out->pool_off;
    if (other == de_off) return de_off;
    PoolDirent cur = read_dirent(other);
    if (!cur.tombstone) {
      // Mark our chain node dead so iteration skips it.
      rg_->cas64(de_off + kDirentModeWordOff,
                 rg_->load64_relaxed(de_off + kDirentModeWordOff),
                 (u64)mode | (1ull << 32));
      return as_tombstone ? Result<u64>(other) : Result<u64>(Errc::exists);
    }
    auto bidx = bucket_index_of(dkey, self_check);
    if (!bidx) continue;
    auto [won, obs] = rg_->cas64(bucket_off(*bidx) + 8, other, de_off);
    if (won) return de_off;
    (void)obs;  // somebody else revived or deleted; re-evaluate
  }
}

Status Overlay::dirent_tombstone(u64 parent_ino, std::string_view name,
                                 const BaseImage* base) {
  auto existing = dirent_resolve(parent_ino, name);
  if (existing) {
    if (existing->tombstone) return Errc::not_found;
    u64 word_off = existing->pool_off + kDirentModeWordOff;
    for (;;) {
      u64 w = rg_->load64_acquire(word_off);
      if ((w >> 32) & 1) return Errc::not_found;  // raced with another delete
      auto [won, obs] = rg_->cas64(word_off, w, w | (1ull << 32));
      if (won) return ok_status();
      (void)obs;
    }
  }
  if (base && base->present() && base->find_dirent(parent_ino, name)) {
    // Shadow the base entry with a new tombstone dirent.
    auto r = dirent_add(parent_ino, name, 0, 0, base, /*as_tombstone=*/true);
    if (!r.ok()) return r.err;
    return ok_status();
  }
  return Errc::not_found;
}

std::optional<Overlay::DirentHit> Overlay::dirent_resolve(
    u64 parent_ino, std::string_view name) const {
  u64 key = key_dirent(parent_ino, name);
  auto verify = [&](u64 po) {
    PoolDirent d = read_dirent(po);
    return d.parent_ino == parent_ino && d.name == name;
  };
  auto po = lookup(key, nullptr, verify);
  if (!po) return std::nullopt;
  PoolDirent d = read_dirent(*po);
  return DirentHit{d.target_ino, d.mode, d.tombstone, *po};
}

std::optional<std::pair<u64, u32>> Overlay::dirent_lookup(
    u64 parent_ino, std::string_view name, const BaseImage* base) const {
  auto hit = dirent_resolve(parent_ino, name);
  if (hit) {
    if (hit->tombstone) return std::nullopt;  // shadows the base
    return std::make_pair(hit->target_ino, hit->mode);
  }
  if (base && base->present()) return base->find_dirent(parent_ino, name);
  return std::nullopt;
}

std::vector<DirEntry> Overlay::dir_iter(u64 dir_ino, const BaseImage* base) const {
  std::vector<DirEntry> out;
  std::unordered_set<std::string> emitted;

  if (base && base->present()) {
    auto dir = base->inode(dir_ino);
    if (dir && dir->is_dir()) {
      base->for_each_dirent(*dir, [&](const FlatDirent& de) {
        if (dirent_resolve(dir_ino, de.name)) return;  // shadowed or tombstoned
        if (!emitted.insert(de.name).second) return;
        auto child = base->inode(de.ino);
        out.push_back({de.name, de.ino, child ? child->mode : 0});
      });
    }
  }

  auto dl = lookup(key_dirlist(dir_ino));
  if (dl) {
    u64 node = rg_->load64_acquire(*dl + 8);
    u64 steps = 0, cap = pool_len_ / kPoolDirentSize + 1;
    while (node != 0 && steps++ < cap) {
      PoolDirent d = read_dirent(node);
      if (!d.tombstone) {
        // Only the hash-published entry for a name is live; lost-race chain
        // nodes resolve to a different offset and are skipped.
        auto res = dirent_resolve(dir_ino, d.name);
        if (res && !res->tombstone && res->pool_off == node &&
            emitted.insert(d.name).second)
          out.push_back({d.name, d.target_ino, d.mode});
      }
      node = d.next_off;
    }
  }
  return out;
}

}  // namespace daxfs
