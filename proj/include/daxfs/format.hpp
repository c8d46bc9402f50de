#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "daxfs/region.hpp"
#include "daxfs/types.hpp"

namespace daxfs {

// On-media constants.  The byte-exact layout is documented in docs/format.md;
// all integers are little-endian.

constexpr u64 kSuperMagic = 0x5346584144ull;        // "DAXFS"
constexpr u64 kOverlayMagic = 0x314C564F53465844ull;  // "DXFSOVL1"
constexpr u64 kPcacheMagic = 0x3148435053465844ull;   // "DXFSPCH1"
constexpr u32 kFormatVersion = 1;

constexpr u64 kBaseInodeSize = 64;
constexpr u64 kFlatDirentSize = 271;
constexpr u64 kMaxNameLen = 254;
constexpr u64 kOvlBucketSize = 16;
constexpr u64 kPcacheSlotMetaSize = 16;
constexpr u64 kMaxBackingPaths = 8;
constexpr u64 kBackingAreaOff = 128;   // within the superblock page
constexpr u64 kBackingAreaLen = 4096 - kBackingAreaOff;

enum class MountMode : u32 { static_ = 0, split = 1, empty = 2 };

const char* mode_name(MountMode m);

// Superblock field offsets (byte offsets within the first 4 KB page).
namespace sb_off {
constexpr u64 magic = 0;
constexpr u64 version = 8;
constexpr u64 mode = 12;
constexpr u64 total_size = 16;
constexpr u64 base_off = 24;
constexpr u64 base_len = 32;
constexpr u64 ovl_off = 40;
constexpr u64 ovl_len = 48;
constexpr u64 pcache_off = 56;
constexpr u64 pcache_len = 64;
constexpr u64 inode_count = 72;
constexpr u64 backing_count = 76;
constexpr u64 next_ino = 80;  // atomic word: overlay inode number allocator
}  // namespace sb_off

// Overlay header field offsets (relative to ovl_off).
namespace ovh_off {
constexpr u64 magic = 0;
constexpr u64 bucket_count = 8;
constexpr u64 pool_len = 16;
constexpr u64 pool_alloc = 24;  // atomic bump cursor, bytes consumed from pool start
constexpr u64 free_heads = 32;  // 4 tagged words: inode, data, dirent, dirlist
constexpr u64 stats = 64;       // u64 counters, see overlay.hpp
}  // namespace ovh_off

// Pcache header field offsets (relative to pcache_off).
namespace pch_off {
constexpr u64 magic = 0;
constexpr u64 slot_count = 8;
constexpr u64 evict_hand = 16;  // atomic, monotonically increasing slot counter
constexpr u64 stats = 24;       // u64 counters, see pcache.hpp
}  // namespace pch_off

struct Superblock {
  u64 magic = kSuperMagic;
  u32 version = kFormatVersion;
  MountMode mode = MountMode::empty;
  u64 total_size = 0;
  u64 base_off = 0, base_len = 0;
  u64 ovl_off = 0, ovl_len = 0;
  u64 pcache_off = 0, pcache_len = 0;
  u32 inode_count = 0;
  u64 next_ino = 2;
  std::vector<std::string> backing_paths;

  bool operator==(const Superblock&) const = default;

  bool has_base() const { return base_len != 0; }
  bool has_overlay() const { return ovl_len != 0; }
  bool has_pcache() const { return pcache_len != 0; }
  // Base data area (file bytes + dirent arrays) follows the inode table.
  u64 data_area_off() const { return base_off + page_align(kBaseInodeSize * inode_count); }
  u64 data_area_len() const {
    u64 doff = data_area_off();
    return doff >= base_off + base_len ? 0 : base_off + base_len - doff;
  }
};

// 64-byte base inode record.
struct BaseInode {
  u64 ino = 0;
  u32 mode = 0;  // POSIX type | permissions
  u32 uid = 0;
  u32 gid = 0;
  u64 size = 0;
  u64 mtime_ns = 0;
  u64 data_off = 0;  // into the data area (static/empty) or backing file (split files)
  u32 dirent_count = 0;

  bool is_dir() const { return (mode & 0170000) == 0040000; }
  bool is_reg() const { return (mode & 0170000) == 0100000; }
  bool is_symlink() const { return (mode & 0170000) == 0120000; }
};

// 271-byte flat dirent record.
struct FlatDirent {
  u8 name_len = 0;
  u64 ino = 0;
  u64 parent_ino = 0;
  std::string name;
};

struct LayoutConfig {
  MountMode mode = MountMode::empty;
  u32 inode_count = 0;
  u64 data_len = 0;      // base data area bytes
  u64 bucket_count = 0;
  u64 pool_len = 0;
  u64 slot_count = 0;
};

// Computes region placement: super, base, overlay, pcache laid out
// sequentially with 4096 alignment.
Result<Superblock> layout(const LayoutConfig& cfg);

Status write_superblock(SharedRegion& rg, const Superblock& sb);
Result<Superblock> read_superblock(const SharedRegion& rg);

void write_base_inode(SharedRegion& rg, const Superblock& sb, u64 ino,
                      const BaseInode& bi);
void encode_flat_dirent(u8* dst, const FlatDirent& de);

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> findings;
  void flag(std::string f) {
    ok = false;
    findings.push_back(std::move(f));
  }
};

// Single forward pass over the image: superblock, region bounds, inode data
// ranges, flat dirents, overlay and pcache headers.  Malformed images produce
// findings, never a crash.
ValidationReport validate_image(const SharedRegion& rg);

// Read-only view over the base image region.
class BaseImage {
 public:
  BaseImage(const SharedRegion& rg, const Superblock& sb) : rg_(&rg), sb_(&sb) {}

  bool present() const { return sb_->has_base(); }
  bool sane() const;
  u32 inode_count() const { return sb_->inode_count; }
  std::optional<BaseInode> inode(u64 ino) const;
  // Pointer into the data area; nullptr when out of bounds.
  const u8* data_ptr(u64 data_off, u64 len) const;
  std::optional<FlatDirent> dirent_at(const BaseInode& dir, u32 idx) const;
  std::optional<std::pair<u64, u32>> find_dirent(u64 parent_ino,
                                                 std::string_view name) const;
  void for_each_dirent(const BaseInode& dir,
                       const std::function<void(const FlatDirent&)>& fn) const;

  const Superblock& sb() const { return *sb_; }

 private:
  const SharedRegion* rg_;
  const Superblock* sb_;
};

}  // namespace daxfs
