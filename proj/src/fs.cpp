#include "daxfs/fs.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <mutex>

namespace daxfs {

namespace {

constexpr u32 kTypeMask = 0170000;
constexpr u32 kDirType = 0040000;
constexpr u32 kRegType = 0100000;
constexpr u32 kLinkType = 0120000;

u64 pages_of(u64 size) { return (size + kPageSize - 1) / kPageSize; }

}  // namespace

Mount::~Mount() {
  for (int fd : backing_fds_)
    if (fd >= 0) ::close(fd);
}

bool Mount::writable() const {
  return opts_.writable && sb_.mode != MountMode::static_;
}

Result<std::unique_ptr<Mount>> Mount::open(const std::string& image_path,
                                           const MountOptions& opts) {
  auto rg = SharedRegion::map_file(image_path, 0, false, true);
  if (!rg.ok()) return rg.err;
  return open(std::move(*rg), opts);
}

Result<std::unique_ptr<Mount>> Mount::open(SharedRegion region,
                                           const MountOptions& opts) {
  auto m = std::unique_ptr<Mount>(new Mount());
  m->rg_ = std::move(region);
  auto st = m->init(opts);
  if (!st.ok()) return st.err;
  return m;
}

Status Mount::init(const MountOptions& opts) {
  opts_ = opts;
  if (opts.validate) {
    auto rep = validate_image(rg_);
    if (!rep.ok) return Errc::bad_format;
  }
  auto sbr = read_superblock(rg_);
  if (!sbr.ok()) return sbr.err;
  sb_ = *sbr;
  if (sb_.total_size > rg_.size()) return Errc::bad_format;
  if (sb_.has_base()) base_.emplace(rg_, sb_);
  if (sb_.has_overlay()) {
    auto ov = Overlay::attach(rg_, sb_);
    if (!ov.ok()) return ov.err;
    ovl_ = std::move(*ov);
  }
  if (sb_.has_pcache()) {
    auto pc = Pcache::attach(rg_, sb_);
    if (!pc.ok()) return pc.err;
    pc_ = std::move(*pc);
  }
  if (sb_.mode == MountMode::split) {
    const auto& paths =
        opts_.backing_paths.empty() ? sb_.backing_paths : opts_.backing_paths;
    for (const auto& p : paths) {
      int fd = ::open(p.c_str(), O_RDONLY);
      if (fd < 0) return Errc::io_error;
      backing_fds_.push_back(fd);
    }
    if (backing_fds_.empty()) return Errc::bad_format;
  }
  return ok_status();
}

// --- inode helpers ---

Result<u64> Mount::mint_ino() {
  for (;;) {
    u64 cur = rg_.load64_acquire(sb_off::next_ino);
    if (cur >= kMaxIno) return Errc::no_space;
    auto [won, obs] = rg_.cas64(sb_off::next_ino, cur, cur + 1);
    if (won) return cur;
    (void)obs;
  }
}

u64 Mount::find_overlay_inode(u64 ino) const {
  if (!ovl_) return 0;
  u64 key = key_inode(ino);
  {
    std::shared_lock lk(index_mu_);
    auto it = page_index_.find(key);
    if (it != page_index_.end()) return it->second;
  }
  auto po = ovl_->lookup(key);
  if (!po) return 0;
  std::unique_lock lk(index_mu_);
  page_index_[key] = *po;
  return *po;
}

Result<u64> Mount::ensure_overlay_inode(u64 ino) {
  if (!ovl_) return Errc::read_only;
  u64 existing = find_overlay_inode(ino);
  if (existing) return existing;
  PoolInode pi;
  if (base_) {
    if (auto bi = base_->inode(ino)) {
      pi.mode = bi->mode;
      pi.uid = (u16)bi->uid;
      pi.gid = (u16)bi->gid;
      pi.size = bi->size;
      pi.mtime_ns = bi->mtime_ns;
    }
  }
  auto out = ovl_->insert(key_inode(ino), EntryType::inode, [&]() -> Result<u64> {
    auto off = ovl_->alloc(EntryType::inode, kPoolInodeSize);
    if (!off.ok()) return off;
    ovl_->write_pool_inode(*off, pi);
    return off;
  });
  if (!out.ok()) return out.err;
  index_insert(key_inode(ino), out->pool_off);
  return out->pool_off;
}

Result<FileAttr> Mount::getattr_ino(u64 ino) {
  u64 po = find_overlay_inode(ino);
  if (po) {
    PoolInode pi = ovl_->read_pool_inode(po);
    return FileAttr{ino, pi.mode, pi.uid, pi.gid, pi.size, pi.mtime_ns};
  }
  if (base_) {
    if (auto bi = base_->inode(ino))
      return FileAttr{ino, bi->mode, bi->uid, bi->gid, bi->size, bi->mtime_ns};
  }
  return Errc::not_found;
}

// --- path resolution ---

namespace {

Result<std::vector<std::string>> split_path(const std::string& path) {
  if (path.empty() || path[0] != '/') return Errc::invalid;
  std::vector<std::string> comps;
  size_t i = 1;
  while (i < path.size()) {
    size_t j = path.find('/', i);
    if (j == std::string::npos) j = path.size();
    std::string c = path.substr(i, j - i);
    if (!c.empty()) {
      if (c == "." || c == "..") return Errc::invalid;
      comps.push_back(std::move(c));
    }
    i = j + 1;
  }
  return comps;
}

}  // namespace

Result<u64> Mount::resolve(const std::string& path) {
  if (path.empty() || path[0] != '/') return Errc::invalid;
  return resolve_from(kRootIno, path, 0);
}

Result<u64> Mount::resolve_from(u64 dir, const std::string& path, u64 depth) {
  if (depth > kSymlinkDepthCap) return Errc::loop;
  bool absolute = !path.empty() && path[0] == '/';
  auto comps = split_path(absolute ? path : "/" + path);
  if (!comps.ok()) return comps.err;
  u64 cur = absolute ? kRootIno : dir;
  for (size_t i = 0; i < comps->size(); i++) {
    auto attr = getattr_ino(cur);
    if (!attr.ok()) return attr.err;
    if (!attr->is_dir()) return Errc::not_dir;
    std::optional<std::pair<u64, u32>> hit;
    if (ovl_)
      hit = ovl_->dirent_lookup(cur, (*comps)[i], base_ ? &*base_ : nullptr);
    else if (base_)
      hit = base_->find_dirent(cur, (*comps)[i]);
    if (!hit) return Errc::not_found;
    u64 child = hit->first;
    if ((hit->second & kTypeMask) == kLinkType) {
      auto la = getattr_ino(child);
      if (!la.ok()) return la.err;
      std::string target(la->size, '\0');
      auto n = read(child, 0, std::span<u8>((u8*)target.data(), target.size()));
      if (!n.ok()) return n.err;
      target.resize(*n);
      // Relative targets resolve against the link's directory.
      auto r = resolve_from(cur, target, depth + 1);
      if (!r.ok()) return r.err;
      child = *r;
    }
    cur = child;
  }
  return cur;
}

Result<std::pair<u64, std::string>> Mount::resolve_parent(const std::string& path) {
  auto comps = split_path(path);
  if (!comps.ok()) return comps.err;
  if (comps->empty()) return Errc::invalid;  // root has no parent entry
  std::string dir = "/";
  for (size_t i = 0; i + 1 < comps->size(); i++) dir += (*comps)[i] + "/";
  auto pino = resolve(dir);
  if (!pino.ok()) return pino.err;
  auto attr = getattr_ino(*pino);
  if (!attr.ok()) return attr.err;
  if (!attr->is_dir()) return Errc::not_dir;
  return std::make_pair(*pino, comps->back());
}

// --- namespace mutation ---

Result<u64> Mount::make_node(const std::string& path, u32 mode,
                             const std::string& symlink_target) {
  if (!writable()) return Errc::read_only;
  auto pr = resolve_parent(path);
  if (!pr.ok()) return pr.err;
  auto [parent, name] = *pr;
  if (!valid_entry_name(name)) return Errc::invalid;

  auto ino = mint_ino();
  if (!ino.ok()) return ino.err;

  PoolInode pi;
  pi.mode = mode;
  pi.size = 0;
  auto out = ovl_->insert(key_inode(*ino), EntryType::inode, [&]() -> Result<u64> {
    auto off = ovl_->alloc(EntryType::inode, kPoolInodeSize);
    if (!off.ok()) return off;
    ovl_->write_pool_inode(*off, pi);
    return off;
  });
  if (!out.ok()) return out.err;

  auto de = ovl_->dirent_add(parent, name, *ino, mode, base_ ? &*base_ : nullptr);
  if (!de.ok()) {
    // Name race lost: recycle the freshly minted inode entry.
    ovl_->erase(key_inode(*ino), EntryType::inode);
    return de.err;
  }
  if (!symlink_target.empty()) {
    auto w = write(*ino, 0, std::span<const u8>((const u8*)symlink_target.data(),
                                                symlink_target.size()));
    if (!w.ok()) return w.err;
  }
  return *ino;
}

Result<u64> Mount::create(const std::string& path, u32 perm) {
  return make_node(path, kRegType | (perm & 07777), "");
}

Result<u64> Mount::mkdir(const std::string& path, u32 perm) {
  return make_node(path, kDirType | (perm & 07777), "");
}

Result<u64> Mount::symlink(const std::string& path, const std::string& target) {
  if (target.empty() || target.size() > kPageSize) return Errc::invalid;
  return make_node(path, kLinkType | 0777, target);
}

Result<std::string> Mount::readlink(const std::string& path) {
  auto pr = resolve_parent(path);
  if (!pr.ok()) return pr.err;
  std::optional<std::pair<u64, u32>> hit;
  if (ovl_)
    hit = ovl_->dirent_lookup(pr->first, pr->second, base_ ? &*base_ : nullptr);
  else if (base_)
    hit = base_->find_dirent(pr->first, pr->second);
  if (!hit) return Errc::not_found;
  if ((hit->second & kTypeMask) != kLinkType) return Errc::invalid;
  auto attr = getattr_ino(hit->first);
  if (!attr.ok()) return attr.err;
  std::string target(attr->size, '\0');
  auto n = read(hit->first, 0, std::span<u8>((u8*)target.data(), target.size()));
  if (!n.ok()) return n.err;
  target.resize(*n);
  return target;
}

Status Mount::free_file_pages(u64 ino, u64 from_page, u64 size) {
  u64 np = pages_of(size);
  for (u64 pg = from_page; pg < np; pg++) {
    auto key = key_data(ino, pg);
    if (!key.ok()) break;
    ovl_->erase(*key, EntryType::data);
    std::unique_lock lk(index_mu_);
    page_index_.erase(*key);
  }
  return ok_status();
}

Status Mount::unlink(const std::string& path) {
  if (!writable()) return Errc::read_only;
  auto pr = resolve_parent(path);
  if (!pr.ok()) return pr.err;
  auto hit = ovl_->dirent_lookup(pr->first, pr->second, base_ ? &*base_ : nullptr);
  if (!hit) return Errc::not_found;
  if ((hit->second & kTypeMask) == kDirType) return Errc::is_dir;
  u64 ino = hit->first;
  auto st = ovl_->dirent_tombstone(pr->first, pr->second, base_ ? &*base_ : nullptr);
  if (!st.ok()) return st;
  auto attr = getattr_ino(ino);
  if (attr.ok()) free_file_pages(ino, 0, attr->size);
  ovl_->erase(key_inode(ino), EntryType::inode);
  std::unique_lock lk(index_mu_);
  page_index_.erase(key_inode(ino));
  return ok_status();
}

Status Mount::rmdir(const std::string& path) {
  if (!writable()) return Errc::read_only;
  auto pr = resolve_parent(path);
  if (!pr.ok()) return pr.err;
  auto hit = ovl_->dirent_lookup(pr->first, pr->second, base_ ? &*base_ : nullptr);
  if (!hit) return Errc::not_found;
  if ((hit->second & kTypeMask) != kDirType) return Errc::not_dir;
  if (!ovl_->dir_iter(hit->first, base_ ? &*base_ : nullptr).empty())
    return Errc::not_empty;
  auto st = ovl_->dirent_tombstone(pr->first, pr->second, base_ ? &*base_ : nullptr);
  if (!st.ok()) return st;
  ovl_->erase(key_inode(hit->first), EntryType::inode);
  std::unique_lock lk(index_mu_);
  page_index_.erase(key_inode(hit->first));
  return ok_status();
}

Status Mount::rename(const std::string& oldp, const std::string& newp) {
  if (!writable()) return Errc::read_only;
  auto opr = resolve_parent(oldp);
  if (!opr.ok()) return opr.err;
  auto hit = ovl_->dirent_lookup(opr->first, opr->second, base_ ? &*base_ : nullptr);
  if (!hit) return Errc::not_found;
  auto npr = resolve_parent(newp);
  if (!npr.ok()) return npr.err;
  // New name first, so the file is never unreachable; a transient window with
  // both names visible is documented behavior.
  auto de = ovl_->dirent_add(npr->first, npr->second, hit->first, hit->second,
                             base_ ? &*base_ : nullptr);
  if (!de.ok()) return de.err;
  return ovl_->dirent_tombstone(opr->first, opr->second, base_ ? &*base_ : nullptr);
}

Result<std::vector<DirEntry>> Mount::readdir(const std::string& path) {
  auto ino = resolve(path);
  if (!ino.ok()) return ino.err;
  auto attr = getattr_ino(*ino);
  if (!attr.ok()) return attr.err;
  if (!attr->is_dir()) return Errc::not_dir;
  if (ovl_) return ovl_->dir_iter(*ino, base_ ? &*base_ : nullptr);
  std::vector<DirEntry> out;
  if (base_) {
    auto bi = base_->inode(*ino);
    if (bi && bi->is_dir())
      base_->for_each_dirent(*bi, [&](const FlatDirent& de) {
        auto child = base_->inode(de.ino);
        out.push_back({de.name, de.ino, child ? child->mode : 0});
      });
  }
  return out;
}

Result<FileAttr> Mount::getattr(const std::string& path) {
  auto ino = resolve(path);
  if (!ino.ok()) return ino.err;
  return getattr_ino(*ino);
}

Status Mount::setattr(const std::string& path, std::optional<u32> mode,
                      std::optional<u32> uid, std::optional<u32> gid) {
  if (!writable()) return Errc::read_only;
  auto ino = resolve(path);
  if (!ino.ok()) return ino.err;
  auto po = ensure_overlay_inode(*ino);
  if (!po.ok()) return po.err;
  PoolInode pi = ovl_->read_pool_inode(*po);
  if (mode) pi.mode = (pi.mode & kTypeMask) | (*mode & 07777);
  if (uid) pi.uid = (u16)*uid;
  if (gid) pi.gid = (u16)*gid;
  // size word untouched: rewrite only the attr fields
  u8* p = rg_.data() + *po;
  std::memcpy(p + 8, &pi.mode, 4);
  std::memcpy(p + 12, &pi.uid, 2);
  std::memcpy(p + 14, &pi.gid, 2);
  return ok_status();
}

// --- data path ---

void Mount::index_insert(u64 key, u64 off) {
  std::unique_lock lk(index_mu_);
  page_index_[key] = off;
}

Result<u64> Mount::page_pool_off(u64 ino, u64 pgoff) {
  auto key = key_data(ino, pgoff);
  if (!key.ok()) return key.err;
  {
    std::shared_lock lk(index_mu_);
    auto it = page_index_.find(*key);
    if (it != page_index_.end()) return it->second;
  }
  if (!ovl_) return Errc::not_found;
  auto po = ovl_->lookup(*key);
  if (!po) return Errc::not_found;
  index_insert(*key, *po);
  return *po;
}

// Copies the pre-write contents of page pgoff (base/backing data or zeros)
// into dst, for copy-on-write of partially overwritten pages.
Status Mount::cow_fill(u64 ino, u64 pgoff, u8* dst, const BaseInode* bi) {
  (void)ino;
  std::memset(dst, 0, kPageSize);
  if (!bi || !base_) return ok_status();
  u64 off = pgoff * kPageSize;
  if (off >= bi->size) return ok_status();
  u64 n = std::min(kPageSize, bi->size - off);
  if (sb_.mode == MountMode::split && bi->is_reg()) {
    if (backing_fds_.empty()) return Errc::io_error;
    ssize_t r = pread(backing_fds_[0], dst, n, (off_t)(bi->data_off + off));
    if (r < 0) return Errc::io_error;
    return ok_status();
  }
  const u8* src = base_->data_ptr(bi->data_off + off, n);
  if (src) std::memcpy(dst, src, n);
  return ok_status();
}

Result<u64> Mount::write_path(const std::string& path, u64 offset,
                              std::span<const u8> data) {
  auto ino = resolve(path);
  if (!ino.ok()) return ino.err;
  return write(*ino, offset, data);
}

Result<u64> Mount::write(u64 ino, u64 offset, std::span<const u8> data) {
  if (!writable()) return Errc::read_only;
  if (data.empty()) return 0ull;
  u64 end = offset + data.size();
  if (end < offset || end > kMaxPgoff * kPageSize) return Errc::no_space;

  auto attr = getattr_ino(ino);
  if (!attr.ok()) return attr.err;
  if (attr->is_dir()) return Errc::is_dir;

  auto ipo = ensure_overlay_inode(ino);
  if (!ipo.ok()) return ipo.err;

  std::optional<BaseInode> bi;
  if (base_) bi = base_->inode(ino);

  u64 first_pg = offset / kPageSize;
  u64 last_pg = (end - 1) / kPageSize;

  // Pass 1: find pages that already have overlay storage.
  std::vector<u64> page_off(last_pg - first_pg + 1, 0);
  u64 missing = 0;
  for (u64 pg = first_pg; pg <= last_pg; pg++) {
    auto po = page_pool_off(ino, pg);
    if (po.ok())
      page_off[pg - first_pg] = *po;
    else
      missing++;
  }

  // Pass 2: one batch allocation covers all new pages of this write, keeping
  // sequentially written data contiguous in the pool.
  u64 next_new = 0;
  if (missing > 0) {
    auto batch = ovl_->alloc_batch(EntryType::data, kPageSize, missing);
    if (!batch.ok()) return batch.err;
    next_new = *batch;
  }

  for (u64 pg = first_pg; pg <= last_pg; pg++) {
    u64 page_start = pg * kPageSize;
    u64 from = std::max(offset, page_start);
    u64 to = std::min(end, page_start + kPageSize);
    const u8* src = data.data() + (from - offset);
    u64 dst_po = page_off[pg - first_pg];
    if (dst_po != 0) {
      std::memcpy(rg_.data() + dst_po + (from - page_start), src, to - from);
      continue;
    }
    u64 fresh = next_new;
    next_new += kPageSize;
    u8* page = rg_.data() + fresh;
    if (to - from < kPageSize) {
      auto st = cow_fill(ino, pg, page, bi ? &*bi : nullptr);
      if (!st.ok()) return st.err;
    }
    std::memcpy(page + (from - page_start), src, to - from);
    auto key = key_data(ino, pg);
    auto out = ovl_->insert(*key, EntryType::data,
                            [&]() -> Result<u64> { return fresh; });
    if (!out.ok()) return out.err;
    if (!out->inserted) {
      // Another process published this page first; our page went back to the
      // free list.  Re-apply our bytes to the winning page.
      std::memcpy(rg_.data() + out->pool_off + (from - page_start), src, to - from);
    }
    index_insert(*key, out->pool_off);
  }

  // CAS-max on the authoritative size word preserves concurrent appends.
  u64 size_off = ovl_->inode_size_off(*ipo);
  for (;;) {
    u64 cur = rg_.load64_acquire(size_off);
    if (end <= cur) break;
    auto [won, obs] = rg_.cas64(size_off, cur, end);
    if (won) break;
    (void)obs;
  }
  return (u64)data.size();
}

Result<u64> Mount::read(u64 ino, u64 offset, std::span<u8> out) {
  auto attr = getattr_ino(ino);  // refreshes i_size via an atomic load
  if (!attr.ok()) return attr.err;
  if (attr->is_dir()) return Errc::is_dir;
  if (offset >= attr->size || out.empty()) return 0ull;
  u64 end = std::min(offset + out.size(), attr->size);
  u64 n = end - offset;

  std::optional<BaseInode> bi;
  if (base_) bi = base_->inode(ino);

  enum class Src : u8 { pool, base, zero, pcache };
  struct Run {
    Src src;
    u64 abs = 0;    // region offset of the first byte (pool/base)
    u64 file_off = 0;
    u64 len = 0;
    u64 pgoff = 0;  // pcache only
  };

  u64 first_pg = offset / kPageSize;
  u64 last_pg = (end - 1) / kPageSize;
  std::vector<Run> runs;
  for (u64 pg = first_pg; pg <= last_pg; pg++) {
    u64 page_start = pg * kPageSize;
    u64 from = std::max(offset, page_start);
    u64 to = std::min(end, page_start + kPageSize);
    Run r{Src::zero, 0, from, to - from, pg};
    auto po = page_pool_off(ino, pg);
    if (po.ok()) {
      r.src = Src::pool;
      r.abs = *po + (from - page_start);
    } else if (bi && page_start < bi->size) {
      if (sb_.mode == MountMode::split && bi->is_reg()) {
        r.src = Src::pcache;
      } else {
        const u8* p = base_->data_ptr(bi->data_off + page_start, 1);
        if (p) {
          r.src = Src::base;
          r.abs = (u64)(p - rg_.data()) + (from - page_start);
        }
      }
    }
    bool merged = false;
    if (opts_.coalesce && !runs.empty()) {
      Run& prev = runs.back();
      if (prev.src == r.src && prev.file_off + prev.len == r.file_off &&
          (r.src == Src::zero ||
           ((r.src == Src::pool || r.src == Src::base) && prev.abs + prev.len == r.abs))) {
        prev.len += r.len;
        merged = true;
      }
    }
    if (!merged) runs.push_back(r);
  }

  for (const Run& r : runs) {
    u8* dst = out.data() + (r.file_off - offset);
    switch (r.src) {
      case Src::pool:
      case Src::base:
        std::memcpy(dst, rg_.data() + r.abs, r.len);
        copies_issued_++;
        if (r.len > kPageSize) coalesced_runs_++;
        break;
      case Src::zero:
        std::memset(dst, 0, r.len);
        copies_issued_++;
        break;
      case Src::pcache: {
        // Runs of pcache pages are copied slot by slot, pin held across each copy.
        u64 done = 0;
        while (done < r.len) {
          u64 fo = r.file_off + done;
          u64 pg = fo / kPageSize;
          u64 in_page = fo % kPageSize;
          u64 take = std::min(kPageSize - in_page, r.len - done);
          u64 tag = pcache_tag(ino, pg);
          u64 doff = bi->data_off;
          bool filled = false;
          auto slot = pc_->get(
              tag,
              [&](std::span<u8, kPageSize> dstp) -> Status {
                ssize_t got = pread(backing_fds_[0], dstp.data(), kPageSize,
                                    (off_t)(doff + pg * kPageSize));
                if (got < 0) return Errc::io_error;
                if ((u64)got < kPageSize)
                  std::memset(dstp.data() + got, 0, kPageSize - got);
                return ok_status();
              },
              &filled);
          if (!slot.ok()) return slot.err;
          std::memcpy(dst + done, pc_->slot_data(*slot) + in_page, take);
          pc_->put(*slot);
          copies_issued_++;
          done += take;
          if (filled && (pc_miss_tick_.fetch_add(1) + 1) % kSweepStride == 0)
            pc_->sweep();
        }
        break;
      }
    }
  }
  return n;
}

Status Mount::truncate(const std::string& path, u64 new_size) {
  if (!writable()) return Errc::read_only;
  auto ino = resolve(path);
  if (!ino.ok()) return ino.err;
  auto attr = getattr_ino(*ino);
  if (!attr.ok()) return attr.err;
  if (attr->is_dir()) return Errc::is_dir;
  if (new_size > kMaxPgoff * kPageSize) return Errc::no_space;

  auto ipo = ensure_overlay_inode(*ino);
  if (!ipo.ok()) return ipo.err;

  std::optional<BaseInode> bi;
  if (base_) bi = base_->inode(*ino);

  if (new_size < attr->size) {
    u64 keep_pages = pages_of(new_size);
    // Boundary page: the tail beyond new_size must read back as zeros.
    if (new_size % kPageSize != 0) {
      u64 pg = keep_pages - 1;
      u64 tail = new_size % kPageSize;
      auto po = page_pool_off(*ino, pg);
      if (po.ok()) {
        std::memset(rg_.data() + *po + tail, 0, kPageSize - tail);
      } else if (bi && pg * kPageSize < bi->size) {
        // Base-backed boundary page: copy it up with the tail zeroed.
        auto batch = ovl_->alloc_batch(EntryType::data, kPageSize, 1);
        if (!batch.ok()) return batch.err;
        u8* page = rg_.data() + *batch;
        auto st = cow_fill(*ino, pg, page, &*bi);
        if (!st.ok()) return st;
        std::memset(page + tail, 0, kPageSize - tail);
        auto key = key_data(*ino, pg);
        auto out = ovl_->insert(*key, EntryType::data,
                                [&]() -> Result<u64> { return *batch; });
        if (!out.ok()) return out.err;
        index_insert(*key, out->pool_off);
      }
    }
    // Whole pages beyond the new size: recycle overlay pages; base-backed
    // pages get zero overlay pages so a later grow reads holes, not old data.
    u64 old_pages = pages_of(attr->size);
    for (u64 pg = keep_pages; pg < old_pages; pg++) {
      auto key = key_data(*ino, pg);
      if (!key.ok()) break;
      bool base_backed = bi && pg * kPageSize < bi->size &&
                         !(sb_.mode == MountMode::static_);
      auto freed = ovl_->erase(*key, EntryType::data);
      {
        std::unique_lock lk(index_mu_);
        page_index_.erase(*key);
      }
      if (base_backed) {
        auto batch = ovl_->alloc_batch(EntryType::data, kPageSize, 1);
        if (!batch.ok()) return batch.err;
        std::memset(rg_.data() + *batch, 0, kPageSize);
        auto out = ovl_->insert(*key, EntryType::data,
                                [&]() -> Result<u64> { return *batch; });
        if (!out.ok()) return out.err;
        if (!out->inserted) std::memset(rg_.data() + out->pool_off, 0, kPageSize);
      }
      (void)freed;
    }
  }

  u64 size_off = ovl_->inode_size_off(*ipo);
  for (;;) {
    u64 cur = rg_.load64_acquire(size_off);
    auto [won, obs] = rg_.cas64(size_off, cur, new_size);
    if (won) break;
    (void)obs;
  }
  return ok_status();
}

}  // namespace daxfs
