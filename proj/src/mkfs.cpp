#include "daxfs/mkfs.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "daxfs/fs.hpp"
#include "daxfs/overlay.hpp"
#include "daxfs/pcache.hpp"

namespace daxfs {

namespace fsys = std::filesystem;

namespace {

struct Node {
  u64 ino = 0;
  fsys::path path;
  u32 mode = 0;
  u32 uid = 0, gid = 0;
  u64 size = 0;
  u64 mtime_ns = 0;
  u64 data_off = 0;       // data area (or backing file for split regulars)
  std::string symlink_target;
  std::vector<u64> children;  // child node indices, sorted by name
  std::vector<std::string> child_names;
  bool is_dir() const { return (mode & 0170000) == 0040000; }
  bool is_reg() const { return (mode & 0170000) == 0100000; }
  bool is_symlink() const { return (mode & 0170000) == 0120000; }
};

Result<std::vector<Node>> scan_tree(const std::string& root, bool keep_mtime) {
  std::vector<Node> nodes;
  auto stat_into = [&](const fsys::path& p, Node& n) -> Status {
    struct stat st{};
    if (lstat(p.c_str(), &st) != 0) return Errc::io_error;
    n.path = p;
    n.mode = st.st_mode & 0177777;
    n.uid = st.st_uid;
    n.gid = st.st_gid;
    n.mtime_ns = keep_mtime
                     ? (u64)st.st_mtim.tv_sec * 1000000000ull + st.st_mtim.tv_nsec
                     : 0;
    if (S_ISREG(st.st_mode)) {
      n.size = (u64)st.st_size;
    } else if (S_ISLNK(st.st_mode)) {
      std::error_code ec;
      auto t = fsys::read_symlink(p, ec);
      if (ec) return Errc::io_error;
      n.symlink_target = t.string();
      n.size = n.symlink_target.size();
    } else if (!S_ISDIR(st.st_mode)) {
      return Errc::invalid;  // devices, fifos, sockets unsupported
    }
    return ok_status();
  };

  nodes.emplace_back();
  nodes[0].ino = 1;
  auto st = stat_into(root, nodes[0]);
  if (!st.ok()) return st.err;
  if (!nodes[0].is_dir()) return Errc::invalid;

  // Depth-first: assign all children of a directory, then recurse into its
  // subdirectories, names sorted for determinism.
  std::function<Status(u64)> visit = [&](u64 dir_idx) -> Status {
    std::vector<std::string> names;
    for (const auto& e : fsys::directory_iterator(nodes[dir_idx].path))
      names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
      if (name.size() > kMaxNameLen) return Errc::invalid;
      Node child;
      child.ino = nodes.size() + 1;
      auto s = stat_into(nodes[dir_idx].path / name, child);
      if (!s.ok()) return s;
      nodes[dir_idx].children.push_back(nodes.size());
      nodes[dir_idx].child_names.push_back(name);
      nodes.push_back(std::move(child));
    }
    auto kids = nodes[dir_idx].children;
    for (u64 c : kids)
      if (nodes[c].is_dir()) {
        auto s = visit(c);
        if (!s.ok()) return s;
      }
    return ok_status();
  };
  auto vs = visit(0);
  if (!vs.ok()) return vs.err;
  return nodes;
}

Status copy_file_bytes(const fsys::path& src, u8* dst, u64 size) {
  std::ifstream in(src, std::ios::binary);
  if (!in) return Errc::io_error;
  in.read((char*)dst, (std::streamsize)size);
  if ((u64)in.gcount() != size) return Errc::io_error;
  return ok_status();
}

}  // namespace

Status mkdaxfs(const BuildManifest& m, const std::string& out_path) {
  bool split = m.mode == MountMode::split;
  if (split && m.backing_paths.empty()) return Errc::invalid;

  std::vector<Node> nodes;
  if (m.mode != MountMode::empty) {
    if (m.source_dir.empty()) return Errc::invalid;
    auto sc = scan_tree(m.source_dir, m.keep_mtime);
    if (!sc.ok()) return sc.err;
    nodes = std::move(*sc);
  }

  // Data placement: regular file bytes page-aligned (image data area, or the
  // backing file in split mode); dirent arrays and symlink targets packed.
  u64 data_len = 0, backing_len = 0;
  for (auto& n : nodes) {
    if (n.is_reg()) {
      u64& cursor = split ? backing_len : data_len;
      cursor = page_align(cursor);
      n.data_off = cursor;
      cursor += n.size;
    } else if (n.is_dir()) {
      n.data_off = data_len;
      data_len += (u64)n.children.size() * kFlatDirentSize;
    } else {
      n.data_off = data_len;
      data_len += n.size;
    }
  }

  LayoutConfig cfg;
  cfg.mode = m.mode;
  cfg.inode_count = (u32)nodes.size();
  cfg.data_len = data_len;
  if (m.mode != MountMode::static_) {
    cfg.bucket_count = m.bucket_count;
    cfg.pool_len = m.pool_len;
    cfg.slot_count = m.slot_count;
  }
  auto sbr = layout(cfg);
  if (!sbr.ok()) return sbr.err;
  Superblock sb = *sbr;
  sb.backing_paths = m.backing_paths;

  auto rgr = SharedRegion::map_file(out_path, sb.total_size, true);
  if (!rgr.ok()) return rgr.err;
  SharedRegion rg = std::move(*rgr);

  auto ws = write_superblock(rg, sb);
  if (!ws.ok()) return ws;

  std::ofstream backing;
  if (split) {
    backing.open(m.backing_paths[0], std::ios::binary | std::ios::trunc);
    if (!backing) return Errc::io_error;
  }

  for (const auto& n : nodes) {
    BaseInode bi;
    bi.ino = n.ino;
    bi.mode = n.mode;
    bi.uid = n.uid;
    bi.gid = n.gid;
    bi.size = n.is_dir() ? (u64)n.children.size() * kFlatDirentSize : n.size;
    bi.mtime_ns = n.mtime_ns;
    bi.data_off = n.data_off;
    bi.dirent_count = (u32)n.children.size();
    write_base_inode(rg, sb, n.ino, bi);

    u8* area = rg.data() + sb.data_area_off();
    if (n.is_dir()) {
      for (size_t c = 0; c < n.children.size(); c++) {
        FlatDirent de;
        de.name = n.child_names[c];
        de.name_len = (u8)de.name.size();
        de.ino = nodes[n.children[c]].ino;
        de.parent_ino = n.ino;
        encode_flat_dirent(area + n.data_off + c * kFlatDirentSize, de);
      }
    } else if (n.is_symlink()) {
      std::memcpy(area + n.data_off, n.symlink_target.data(), n.size);
    } else if (n.is_reg() && n.size > 0) {
      if (split) {
        backing.seekp((std::streamoff)n.data_off);
        std::string buf(n.size, '\0');
        auto cs = copy_file_bytes(n.path, (u8*)buf.data(), n.size);
        if (!cs.ok()) return cs;
        backing.write(buf.data(), (std::streamsize)buf.size());
      } else {
        auto cs = copy_file_bytes(n.path, area + n.data_off, n.size);
        if (!cs.ok()) return cs;
      }
    }
  }
  if (split) {
    backing.close();
    if (!backing) return Errc::io_error;
  }

  if (sb.has_overlay()) {
    auto os = Overlay::format(rg, sb, m.bucket_count, page_align(m.pool_len));
    if (!os.ok()) return os;
  }
  if (sb.has_pcache()) {
    auto ps = Pcache::format(rg, sb, m.slot_count);
    if (!ps.ok()) return ps;
  }

  if (m.mode == MountMode::empty) {
    // No base image: the root directory lives in the overlay.
    auto ov = Overlay::attach(rg, sb);
    if (!ov.ok()) return ov.err;
    PoolInode root;
    root.mode = 0040000 | 0755;
    auto out = ov->insert(key_inode(kRootIno), EntryType::inode, [&]() -> Result<u64> {
      auto off = ov->alloc(EntryType::inode, kPoolInodeSize);
      if (!off.ok()) return off;
      ov->write_pool_inode(*off, root);
      return off;
    });
    if (!out.ok()) return out.err;
  }
  return ok_status();
}

}  // namespace daxfs
