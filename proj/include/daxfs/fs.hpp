#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "daxfs/format.hpp"
#include "daxfs/overlay.hpp"
#include "daxfs/pcache.hpp"
#include "daxfs/region.hpp"

namespace daxfs {

struct FileAttr {
  u64 ino = 0;
  u32 mode = 0;
  u32 uid = 0;
  u32 gid = 0;
  u64 size = 0;
  u64 mtime_ns = 0;

  bool is_dir() const { return (mode & 0170000) == 0040000; }
  bool is_reg() const { return (mode & 0170000) == 0100000; }
  bool is_symlink() const { return (mode & 0170000) == 0120000; }
};

struct MountOptions {
  bool validate = false;
  bool coalesce = true;
  bool writable = true;
  // Overrides superblock backing paths (split mode); resolved relative to cwd.
  std::vector<std::string> backing_paths;
};

constexpr u64 kRootIno = 1;
constexpr u64 kSymlinkDepthCap = 8;

// Filesystem operations over one shared image.  One Mount per process; the
// underlying region is shared with other mounts of the same image.  Within a
// process a Mount is safe for concurrent use by multiple threads.
class Mount {
 public:
  static Result<std::unique_ptr<Mount>> open(const std::string& image_path,
                                             const MountOptions& opts = {});
  static Result<std::unique_ptr<Mount>> open(SharedRegion region,
                                             const MountOptions& opts = {});

  MountMode mode() const { return sb_.mode; }
  bool writable() const;

  Result<u64> resolve(const std::string& path);
  Result<FileAttr> getattr(const std::string& path);
  Result<FileAttr> getattr_ino(u64 ino);
  Status setattr(const std::string& path, std::optional<u32> mode,
                 std::optional<u32> uid, std::optional<u32> gid);
  Result<u64> create(const std::string& path, u32 perm = 0644);
  Result<u64> mkdir(const std::string& path, u32 perm = 0755);
  Result<u64> symlink(const std::string& path, const std::string& target);
  Result<std::string> readlink(const std::string& path);
  Status unlink(const std::string& path);
  Status rmdir(const std::string& path);
  Status rename(const std::string& oldp, const std::string& newp);
  Status truncate(const std::string& path, u64 new_size);
  Result<std::vector<DirEntry>> readdir(const std::string& path);

  Result<u64> write(u64 ino, u64 offset, std::span<const u8> data);
  Result<u64> read(u64 ino, u64 offset, std::span<u8> out);
  Result<u64> write_path(const std::string& path, u64 offset, std::span<const u8> data);

  // Instrumentation.
  u64 copies_issued() const { return copies_issued_; }
  u64 coalesced_runs() const { return coalesced_runs_; }
  void set_coalesce(bool on) { opts_.coalesce = on; }
  Overlay* overlay() { return ovl_ ? &*ovl_ : nullptr; }
  Pcache* pcache() { return pc_ ? &*pc_ : nullptr; }
  const Superblock& superblock() const { return sb_; }
  SharedRegion& region() { return rg_; }
  const BaseImage* base() const { return base_ ? &*base_ : nullptr; }

 private:
  Mount() = default;
  Status init(const MountOptions& opts);

  Result<u64> resolve_from(u64 dir, const std::string& path, u64 depth);
  Result<std::pair<u64, std::string>> resolve_parent(const std::string& path);
  Result<u64> make_node(const std::string& path, u32 mode,
                        const std::string& symlink_target);
  Result<u64> mint_ino();
  // Overlay inode pool offset for ino, or 0.
  u64 find_overlay_inode(u64 ino) const;
  // Promotes base attrs into the overlay on first write.
  Result<u64> ensure_overlay_inode(u64 ino);
  Status free_file_pages(u64 ino, u64 from_page, u64 size);
  Result<u64> page_pool_off(u64 ino, u64 pgoff);
  void index_insert(u64 key, u64 off);
  Status cow_fill(u64 ino, u64 pgoff, u8* dst, const BaseInode* bi);

  SharedRegion rg_;
  Superblock sb_;
  MountOptions opts_;
  std::optional<BaseImage> base_;
  std::optional<Overlay> ovl_;
  std::optional<Pcache> pc_;
  std::vector<int> backing_fds_;

  // Process-private page index: confirmed (ino,pgoff)->pool_off hits only;
  // misses always fall through so remote inserts become visible.
  mutable std::shared_mutex index_mu_;
  mutable std::unordered_map<u64, u64> page_index_;

  std::atomic<u64> copies_issued_{0};
  std::atomic<u64> coalesced_runs_{0};
  std::atomic<u64> pc_miss_tick_{0};

 public:
  ~Mount();
};

}  // namespace daxfs
