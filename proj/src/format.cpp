#include "daxfs/format.hpp"

#include <cstring>

namespace daxfs {

const char* mode_name(MountMode m) {
  switch (m) {
    case MountMode::static_: return "static";
    case MountMode::split: return "split";
    case MountMode::empty: return "empty";
  }
  return "?";
}

namespace {

u64 get64(const u8* p) {
  u64 v;
  std::memcpy(&v, p, 8);
  return v;
}
u32 get32(const u8* p) {
  u32 v;
  std::memcpy(&v, p, 4);
  return v;
}
void put64(u8* p, u64 v) { std::memcpy(p, &v, 8); }
void put32(u8* p, u32 v) { std::memcpy(p, &v, 4); }

}  // namespace

Result<Superblock> layout(const LayoutConfig& cfg) {
  bool want_base = cfg.mode != MountMode::empty;
  bool want_ovl = cfg.mode != MountMode::static_;
  if (cfg.mode == MountMode::static_ && (cfg.bucket_count || cfg.pool_len || cfg.slot_count))
    return Errc::invalid;
  if (cfg.mode == MountMode::empty && (cfg.inode_count || cfg.data_len))
    return Errc::invalid;
  if (want_ovl && (cfg.bucket_count == 0 || cfg.pool_len == 0)) return Errc::invalid;

  Superblock sb;
  sb.mode = cfg.mode;
  sb.inode_count = cfg.inode_count;
  sb.next_ino = (u64)cfg.inode_count + 1;
  if (sb.next_ino < 2) sb.next_ino = 2;  // ino 1 is always the root

  u64 cursor = kPageSize;
  if (want_base) {
    sb.base_off = cursor;
    sb.base_len = page_align(kBaseInodeSize * cfg.inode_count) + page_align(cfg.data_len);
    cursor += sb.base_len;
  }
  if (want_ovl) {
    sb.ovl_off = cursor;
    sb.ovl_len = page_align(kPageSize + kOvlBucketSize * cfg.bucket_count) +
                 page_align(cfg.pool_len);
    cursor += sb.ovl_len;
    if (cfg.slot_count > 0) {
      sb.pcache_off = cursor;
      sb.pcache_len = page_align(kPageSize + kPcacheSlotMetaSize * cfg.slot_count) +
                      kPageSize * cfg.slot_count;
      cursor += sb.pcache_len;
    }
  }
  sb.total_size = cursor;
  return sb;
}

Status write_superblock(SharedRegion& rg, const Superblock& sb) {
  if (rg.size() < kPageSize) return Errc::invalid;
  u8 page[kPageSize] = {};
  put64(page + sb_off::magic, sb.magic);
  put32(page + sb_off::version, sb.version);
  put32(page + sb_off::mode, (u32)sb.mode);
  put64(page + sb_off::total_size, sb.total_size);
  put64(page + sb_off::base_off, sb.base_off);
  put64(page + sb_off::base_len, sb.base_len);
  put64(page + sb_off::ovl_off, sb.ovl_off);
  put64(page + sb_off::ovl_len, sb.ovl_len);
  put64(page + sb_off::pcache_off, sb.pcache_off);
  put64(page + sb_off::pcache_len, sb.pcache_len);
  put32(page + sb_off::inode_count, sb.inode_count);
  put32(page + sb_off::backing_count, (u32)sb.backing_paths.size());
  put64(page + sb_off::next_ino, sb.next_ino);
  if (sb.backing_paths.size() > kMaxBackingPaths) return Errc::invalid;
  u64 off = kBackingAreaOff;
  for (const auto& p : sb.backing_paths) {
    if (off + p.size() + 1 > kPageSize) return Errc::invalid;
    std::memcpy(page + off, p.data(), p.size());
    off += p.size() + 1;  // NUL terminator from the zeroed page
  }
  std::memcpy(rg.data(), page, kPageSize);
  return ok_status();
}

Result<Superblock> read_superblock(const SharedRegion& rg) {
  if (rg.size() < kPageSize) return Errc::invalid;
  const u8* p = rg.data();
  Superblock sb;
  sb.magic = get64(p + sb_off::magic);
  if (sb.magic != kSuperMagic) return Errc::bad_format;
  sb.version = get32(p + sb_off::version);
  sb.mode = (MountMode)get32(p + sb_off::mode);
  sb.total_size = get64(p + sb_off::total_size);
  sb.base_off = get64(p + sb_off::base_off);
  sb.base_len = get64(p + sb_off::base_len);
  sb.ovl_off = get64(p + sb_off::ovl_off);
  sb.ovl_len = get64(p + sb_off::ovl_len);
  sb.pcache_off = get64(p + sb_off::pcache_off);
  sb.pcache_len = get64(p + sb_off::pcache_len);
  sb.inode_count = get32(p + sb_off::inode_count);
  u32 nback = get32(p + sb_off::backing_count);
  sb.next_ino = get64(p + sb_off::next_ino);
  if (nback > kMaxBackingPaths) return Errc::bad_format;
  u64 off = kBackingAreaOff;
  for (u32 i = 0; i < nback; i++) {
    u64 end = off;
    while (end < kPageSize && p[end] != 0) end++;
    if (end >= kPageSize) return Errc::bad_format;
    sb.backing_paths.emplace_back((const char*)p + off, end - off);
    off = end + 1;
  }
  return sb;
}

void write_base_inode(SharedRegion& rg, const Superblock& sb, u64 ino,
                      const BaseInode& bi) {
  u8 rec[kBaseInodeSize] = {};
  put64(rec + 0, bi.ino);
  put32(rec + 8, bi.mode);
  put32(rec + 12, bi.uid);
  put32(rec + 16, bi.gid);
  put64(rec + 24, bi.size);
  put64(rec + 32, bi.mtime_ns);
  put64(rec + 40, bi.data_off);
  put32(rec + 48, bi.dirent_count);
  std::memcpy(rg.data() + sb.base_off + (ino - 1) * kBaseInodeSize, rec,
              kBaseInodeSize);
}

void encode_flat_dirent(u8* dst, const FlatDirent& de) {
  std::memset(dst, 0, kFlatDirentSize);
  dst[0] = de.name_len;
  put64(dst + 1, de.ino);
  put64(dst + 9, de.parent_ino);
  std::memcpy(dst + 17, de.name.data(), de.name.size());
}

// Guard for images with hostile superblocks: the base region and its inode
// table must lie fully inside the mapping before any record is dereferenced.
bool BaseImage::sane() const {
  u64 sz = rg_->size();
  if (sb_->base_off % kPageSize || sb_->base_len % kPageSize) return false;
  if (sb_->base_off < kPageSize || sb_->base_off > sz ||
      sb_->base_len > sz - sb_->base_off)
    return false;
  return page_align((u64)kBaseInodeSize * sb_->inode_count) <= sb_->base_len;
}

std::optional<BaseInode> BaseImage::inode(u64 ino) const {
  if (!present() || !sane() || ino < 1 || ino > sb_->inode_count) return std::nullopt;
  const u8* rec = rg_->data() + sb_->base_off + (ino - 1) * kBaseInodeSize;
  BaseInode bi;
  bi.ino = get64(rec + 0);
  bi.mode = get32(rec + 8);
  bi.uid = get32(rec + 12);
  bi.gid = get32(rec + 16);
  bi.size = get64(rec + 24);
  bi.mtime_ns = get64(rec + 32);
  bi.data_off = get64(rec + 40);
  bi.dirent_count = get32(rec + 48);
  return bi;
}

const u8* BaseImage::data_ptr(u64 data_off, u64 len) const {
  if (!present() || !sane()) return nullptr;
  u64 area = sb_->data_area_len();
  if (data_off > area || len > area - data_off) return nullptr;
  return rg_->data() + sb_->data_area_off() + data_off;
}

std::optional<FlatDirent> BaseImage::dirent_at(const BaseInode& dir, u32 idx) const {
  if (idx >= dir.dirent_count) return std::nullopt;
  const u8* rec = data_ptr(dir.data_off + (u64)idx * kFlatDirentSize, kFlatDirentSize);
  if (!rec) return std::nullopt;
  FlatDirent de;
  de.name_len = rec[0];
  de.ino = get64(rec + 1);
  de.parent_ino = get64(rec + 9);
  u8 n = de.name_len > kMaxNameLen ? (u8)kMaxNameLen : de.name_len;
  de.name.assign((const char*)rec + 17, n);
  return de;
}

std::optional<std::pair<u64, u32>> BaseImage::find_dirent(
    u64 parent_ino, std::string_view name) const {
  auto dir = inode(parent_ino);
  if (!dir || !dir->is_dir()) return std::nullopt;
  for (u32 i = 0; i < dir->dirent_count; i++) {
    auto de = dirent_at(*dir, i);
    if (!de) break;
    if (de->name == name) {
      auto child = inode(de->ino);
      if (!child) return std::nullopt;
      return std::make_pair(de->ino, child->mode);
    }
  }
  return std::nullopt;
}

void BaseImage::for_each_dirent(
    const BaseInode& dir, const std::function<void(const FlatDirent&)>& fn) const {
  for (u32 i = 0; i < dir.dirent_count; i++) {
    auto de = dirent_at(dir, i);
    if (!de) break;
    fn(*de);
  }
}

namespace {

bool valid_name(const u8* rec) {
  u8 n = rec[0];
  if (n < 1 || n > kMaxNameLen) return false;
  for (u32 i = 0; i < n; i++) {
    u8 c = rec[17 + i];
    if (c == 0 || c == '/') return false;
  }
  for (u64 i = n; i < kMaxNameLen; i++)
    if (rec[17 + i] != 0) return false;
  return true;
}

}  // namespace

ValidationReport validate_image(const SharedRegion& rg) {
  ValidationReport rep;
  if (rg.size() < kPageSize) {
    rep.flag("image shorter than one page");
    return rep;
  }
  const u8* p = rg.data();
  if (get64(p + sb_off::magic) != kSuperMagic) {
    rep.flag("bad superblock magic");
    return rep;
  }
  if (get32(p + sb_off::version) != kFormatVersion)
    rep.flag("unsupported version " + std::to_string(get32(p + sb_off::version)));

  u32 mode_raw = get32(p + sb_off::mode);
  if (mode_raw > 2) rep.flag("bad mode " + std::to_string(mode_raw));
  MountMode mode = (MountMode)mode_raw;

  u64 total = get64(p + sb_off::total_size);
  if (total > rg.size()) rep.flag("total_size exceeds mapped length");

  // Regions must tile forward: super, base, overlay, pcache.
  struct Reg {
    const char* name;
    u64 off, len;
  } regs[3] = {
      {"base", get64(p + sb_off::base_off), get64(p + sb_off::base_len)},
      {"overlay", get64(p + sb_off::ovl_off), get64(p + sb_off::ovl_len)},
      {"pcache", get64(p + sb_off::pcache_off), get64(p + sb_off::pcache_len)},
  };
  u64 cursor = kPageSize;
  for (auto& r : regs) {
    if (r.len == 0) continue;
    if (r.off % kPageSize || r.len % kPageSize)
      rep.flag(std::string(r.name) + " region not page-aligned");
    if (r.off < cursor) rep.flag(std::string(r.name) + " region overlaps predecessor");
    if (r.off > rg.size() || r.len > rg.size() - r.off) {
      rep.flag(std::string(r.name) + " region out of bounds");
      r.len = 0;  // do not scan its contents
      continue;
    }
    cursor = r.off + r.len;
  }
  if (cursor > total) rep.flag("regions extend past total_size");

  u64 base_len = regs[0].len, ovl_off = regs[1].off, ovl_len = regs[1].len;
  u64 pc_off = regs[2].off, pc_len = regs[2].len;
  if (mode_raw <= 2) {
    if (mode == MountMode::static_ && (ovl_len || pc_len))
      rep.flag("static mode with overlay/pcache regions");
    if (mode == MountMode::empty && base_len)
      rep.flag("empty mode with a base region");
    if (mode != MountMode::empty && base_len == 0)
      rep.flag("missing base region");
    if (mode != MountMode::static_ && ovl_len == 0)
      rep.flag("missing overlay region");
  }

  u32 inode_count = get32(p + sb_off::inode_count);
  u64 next_ino = get64(p + sb_off::next_ino);
  if (next_ino <= inode_count) rep.flag("next_ino within base inode range");
  if (get32(p + sb_off::backing_count) > kMaxBackingPaths)
    rep.flag("backing path count exceeds capacity");

  // Base image scan: one forward pass over inodes, then dirent arrays.
  if (base_len) {
    Superblock sb;
    sb.base_off = regs[0].off;
    sb.base_len = base_len;
    sb.inode_count = inode_count;
    if (kBaseInodeSize * inode_count > base_len) {
      rep.flag("inode table exceeds base region");
    } else {
      u64 area = sb.data_area_len();
      for (u32 i = 1; i <= inode_count; i++) {
        const u8* rec = p + sb.base_off + (u64)(i - 1) * kBaseInodeSize;
        u64 size = get64(rec + 24);
        u64 data_off = get64(rec + 40);
        u32 fmode = get32(rec + 8);
        u32 nde = get32(rec + 48);
        bool is_dir = (fmode & 0170000) == 0040000;
        if (get64(rec + 0) != i) rep.flag("inode " + std::to_string(i) + " self-ino mismatch");
        if (is_dir) {
          if (data_off > area || (u64)nde * kFlatDirentSize > area - data_off)
            rep.flag("inode " + std::to_string(i) + " dirent array out of bounds");
        } else if (mode != MountMode::split) {
          // Split-mode file data lives in the backing file; not checkable here.
          if (data_off > area || size > area - data_off)
            rep.flag("inode " + std::to_string(i) + " data range out of bounds");
        }
      }
      // Second forward pass: dirent contents.
      for (u32 i = 1; i <= inode_count; i++) {
        const u8* rec = p + sb.base_off + (u64)(i - 1) * kBaseInodeSize;
        if ((get32(rec + 8) & 0170000) != 0040000) continue;
        u64 data_off = get64(rec + 40);
        u32 nde = get32(rec + 48);
        if (data_off > area || (u64)nde * kFlatDirentSize > area - data_off) continue;
        for (u32 d = 0; d < nde; d++) {
          const u8* de = p + sb.data_area_off() + data_off + (u64)d * kFlatDirentSize;
          std::string where = "dirent " + std::to_string(d) + " of inode " + std::to_string(i);
          if (!valid_name(de)) rep.flag(where + ": bad name");
          u64 child = get64(de + 1);
          u64 parent = get64(de + 9);
          if (child < 1 || child > inode_count) rep.flag(where + ": ino out of range");
          if (parent != i) rep.flag(where + ": parent mismatch");
        }
      }
    }
  }

  if (ovl_len) {
    const u8* oh = p + ovl_off;
    if (get64(oh + ovh_off::magic) != kOverlayMagic) {
      rep.flag("bad overlay magic");
    } else {
      u64 buckets = get64(oh + ovh_off::bucket_count);
      u64 pool_len = get64(oh + ovh_off::pool_len);
      u64 pool_alloc = get64(oh + ovh_off::pool_alloc);
      u64 meta = page_align(kPageSize + buckets * kOvlBucketSize);
      if (buckets == 0 || meta > ovl_len || pool_len > ovl_len - meta)
        rep.flag("overlay bucket/pool arithmetic exceeds region");
      if (pool_alloc > pool_len) rep.flag("pool_alloc exceeds pool_len");
    }
  }

  if (pc_len) {
    const u8* ph = p + pc_off;
    if (get64(ph + pch_off::magic) != kPcacheMagic) {
      rep.flag("bad pcache magic");
    } else {
      u64 slots = get64(ph + pch_off::slot_count);
      u64 meta = page_align(kPageSize + slots * kPcacheSlotMetaSize);
      if (slots == 0 || meta > pc_len || slots * kPageSize > pc_len - meta)
        rep.flag("pcache slot arithmetic exceeds region");
    }
  }

  return rep;
}

}  // namespace daxfs
