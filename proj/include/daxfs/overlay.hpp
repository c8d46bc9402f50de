#pragma once

#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "daxfs/format.hpp"
#include "daxfs/region.hpp"
#include "daxfs/types.hpp"

namespace daxfs {

// 63-bit overlay key encoding.  Low 20 bits of data keys carry the page
// offset; 0xFFFFF and 0xFFFFE are sentinels for inode and dirlist entries.
constexpr u64 kPgoffBits = 20;
constexpr u64 kInodeSentinel = 0xFFFFF;
constexpr u64 kDirlistSentinel = 0xFFFFE;
constexpr u64 kMaxPgoff = 0xFFFFE;  // exclusive: pgoff < 0xFFFFE
constexpr u64 kMaxIno = 1ull << 43;
constexpr u64 kKeyMask = 0x7FFFFFFFFFFFFFFFull;

inline Result<u64> key_data(u64 ino, u64 pgoff) {
  if (ino == 0 || ino >= kMaxIno || pgoff >= kMaxPgoff) return Errc::invalid;
  return (ino << kPgoffBits) | pgoff;
}
inline u64 key_inode(u64 ino) { return (ino << kPgoffBits) | kInodeSentinel; }
inline u64 key_dirlist(u64 ino) { return (ino << kPgoffBits) | kDirlistSentinel; }
u64 key_dirent(u64 parent_ino, std::string_view name);

enum class EntryType : u8 { inode = 1, data = 2, dirent = 3, dirlist = 4 };

constexpr u64 kPoolInodeSize = 32;
constexpr u64 kPoolDirentSize = 296;
constexpr u64 kPoolDirlistSize = 16;

u64 entry_size(EntryType t);
u64 entry_align(EntryType t);

// Overlay inode entry (32 bytes).  The size word at offset 16 is the
// authoritative i_size and is read/written atomically.
struct PoolInode {
  u32 mode = 0;
  u16 uid = 0;
  u16 gid = 0;
  u64 size = 0;
  u64 mtime_ns = 0;
};
constexpr u64 kPoolInodeSizeOff = 16;

struct PoolDirent {
  u64 next_off = 0;
  u64 parent_ino = 0;
  u64 target_ino = 0;
  u32 mode = 0;
  bool tombstone = false;
  std::string name;
};

struct DirEntry {
  std::string name;
  u64 ino = 0;
  u32 mode = 0;
};

// Overlay shared statistics counters (u64 words in the region header).
enum OvlStat : u64 {
  kStInserts = 0,
  kStInsertExists,
  kStLookups,
  kStLookupHits,
  kStProbes,
  kStDeletes,
  kStFrees,
  kStAllocs,
  kOvlStatCount,
};

// The CAS hash overlay: open-addressing bucket table with linear probing over
// a shared region, plus the bump/free-list pool allocator and directory-entry
// chains.  All mutation is by 64-bit CAS; safe from any process or thread.
class Overlay {
 public:
  Overlay() = default;
  static Result<Overlay> attach(SharedRegion& rg, const Superblock& sb);
  // Initializes the overlay header and bucket array (format time only).
  static Status format(SharedRegion& rg, const Superblock& sb, u64 bucket_count,
                       u64 pool_len);

  struct InsertOutcome {
    bool inserted = false;
    u64 pool_off = 0;  // region-absolute offset of the winning entry
  };
  using Publish = std::function<Result<u64>()>;
  using Verify = std::function<bool(u64 pool_off)>;

  // The five-step insert protocol.  publish allocates and fully fills the
  // pool entry; its offset is published only after a write fence.  verify, if
  // given, disambiguates hash-equal keys (dirents) by inspecting the entry.
  Result<InsertOutcome> insert(u64 key, EntryType type, const Publish& publish,
                               const Verify& verify = nullptr);
  std::optional<u64> lookup(u64 key, u64* probes = nullptr,
                            const Verify& verify = nullptr) const;
  // CASes pool_off to 0 (bucket stays USED) and recycles the entry.
  Result<u64> erase(u64 key, EntryType type);

  Result<u64> alloc(EntryType type, u64 size);
  Result<u64> alloc_batch(EntryType type, u64 size, u64 n);
  void free_entry(EntryType type, u64 pool_off);

  // Directory operations (base is optional; pass nullptr when no base image).
  Result<u64> dirent_add(u64 parent_ino, std::string_view name, u64 target_ino,
                         u32 mode, const BaseImage* base, bool as_tombstone = false);
  Status dirent_tombstone(u64 parent_ino, std::string_view name,
                          const BaseImage* base);
  struct DirentHit {
    u64 target_ino = 0;
    u32 mode = 0;
    bool tombstone = false;
    u64 pool_off = 0;
  };
  // Overlay layer only.
  std::optional<DirentHit> dirent_resolve(u64 parent_ino, std::string_view name) const;
  // Overlay with base-image fallback; tombstones shadow the base.
  std::optional<std::pair<u64, u32>> dirent_lookup(u64 parent_ino,
                                                   std::string_view name,
                                                   const BaseImage* base) const;
  std::vector<DirEntry> dir_iter(u64 dir_ino, const BaseImage* base) const;

  PoolDirent read_dirent(u64 pool_off) const;
  PoolInode read_pool_inode(u64 pool_off) const;
  void write_pool_inode(u64 pool_off, const PoolInode& pi);
  u64 inode_size_off(u64 pool_off) const { return pool_off + kPoolInodeSizeOff; }

  u64 bucket_count() const { return buckets_; }
  u64 pool_base() const { return pool_base_; }
  u64 pool_len() const { return pool_len_; }
  u64 pool_consumed() const { return rg_->load64_relaxed(hdr_ + ovh_off::pool_alloc); }
  u64 free_head(EntryType t) const;
  u64 free_list_len(EntryType t) const;
  u64 stat(OvlStat s) const { return rg_->load64_relaxed(hdr_ + ovh_off::stats + 8 * s); }
  // Raw bucket words, for the inspect tool and stress oracles.
  std::pair<u64, u64> bucket(u64 idx) const;
  std::optional<u64> bucket_index_of(u64 key, const Verify& verify = nullptr) const;

  SharedRegion& region() const { return *rg_; }

 private:
  void bump(OvlStat s, u64 n = 1) const {
    rg_->fetch_add64_relaxed(hdr_ + ovh_off::stats + 8 * s, n);
  }
  u64 bucket_off(u64 idx) const { return bucket_base_ + idx * kOvlBucketSize; }
  // Waits up to ~1 ms for an in-flight publication; returns the offset or 0.
  u64 await_publish(u64 pooloff_word) const;

  SharedRegion* rg_ = nullptr;
  u64 hdr_ = 0;         // region offset of the overlay header
  u64 bucket_base_ = 0;
  u64 buckets_ = 0;
  u64 pool_base_ = 0;   // region offset of the pool data start (4 KB aligned)
  u64 pool_len_ = 0;
};

bool valid_entry_name(std::string_view name);

}  // namespace daxfs
