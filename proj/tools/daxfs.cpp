// Shell-style CLI over a mounted image.

#include <iostream>
#include <vector>

#include <CLI11.hpp>

#include "daxfs/fs.hpp"

using namespace daxfs;

namespace {

int exit_code(Errc e) {
  switch (e) {
    case Errc::ok: return 0;
    case Errc::not_found: return 1;
    case Errc::read_only: return 2;
    case Errc::no_space: return 3;
    case Errc::bad_format: return 4;
    default: return 5;
  }
}

int fail(const char* what, Errc e) {
  std::cerr << "daxfs: " << what << ": " << errc_name(e) << "\n";
  return exit_code(e);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"operate on a DAXFS image"};
  app.require_subcommand(1);
  std::string image;
  MountOptions opts;
  app.add_option("--image", image, "image path")->required();
  app.add_option("--backing", opts.backing_paths, "override backing file path");
  app.add_flag("--validate", opts.validate, "validate before mounting");

  std::string path, path2;
  u64 size = 0;
  u64 offset = 0;
  auto* c_check = app.add_subcommand("mount-check", "open and report the mount mode");
  auto* c_ls = app.add_subcommand("ls", "list a directory");
  c_ls->add_option("path", path)->required();
  auto* c_cat = app.add_subcommand("cat", "print file contents");
  c_cat->add_option("path", path)->required();
  auto* c_write = app.add_subcommand("write", "replace file contents from stdin");
  c_write->add_option("path", path)->required();
  c_write->add_option("--offset", offset, "write at offset instead of replacing");
  auto* c_mkdir = app.add_subcommand("mkdir", "create a directory");
  c_mkdir->add_option("path", path)->required();
  auto* c_rm = app.add_subcommand("rm", "remove a file or empty directory");
  c_rm->add_option("path", path)->required();
  auto* c_mv = app.add_subcommand("mv", "rename");
  c_mv->add_option("old", path)->required();
  c_mv->add_option("new", path2)->required();
  auto* c_stat = app.add_subcommand("stat", "print attributes");
  c_stat->add_option("path", path)->required();
  auto* c_trunc = app.add_subcommand("truncate", "set file size");
  c_trunc->add_option("path", path)->required();
  c_trunc->add_option("size", size)->required();
  CLI11_PARSE(app, argc, argv);

  auto mr = Mount::open(image, opts);
  if (!mr.ok()) return fail("mount", mr.err);
  Mount& mnt = **mr;

  if (c_check->parsed()) {
    std::cout << "mode: " << mode_name(mnt.mode()) << "\n"
              << "writable: " << (mnt.writable() ? "true" : "false") << "\n";
    return 0;
  }
  if (c_ls->parsed()) {
    auto r = mnt.readdir(path);
    if (!r.ok()) return fail("ls", r.err);
    for (const auto& e : *r) {
      char t = (e.mode & 0170000) == 0040000   ? 'd'
               : (e.mode & 0170000) == 0120000 ? 'l'
                                               : '-';
      std::cout << t << ' ' << e.ino << ' ' << e.name << "\n";
    }
    return 0;
  }
  if (c_cat->parsed()) {
    auto ir = mnt.resolve(path);
    if (!ir.ok()) return fail("cat", ir.err);
    auto at = mnt.getattr_ino(*ir);
    if (!at.ok()) return fail("cat", at.err);
    if (at->is_dir()) return fail("cat", Errc::is_dir);
    std::vector<u8> buf(1 << 20);
    for (u64 off = 0; off < at->size;) {
      u64 want = std::min<u64>(buf.size(), at->size - off);
      auto rr = mnt.read(*ir, off, std::span<u8>(buf.data(), want));
      if (!rr.ok()) return fail("cat", rr.err);
      if (*rr == 0) break;
      std::cout.write((const char*)buf.data(), (std::streamsize)*rr);
      off += *rr;
    }
    return 0;
  }
  if (c_write->parsed()) {
    std::vector<u8> data;
    char chunk[1 << 16];
    while (std::cin.read(chunk, sizeof chunk) || std::cin.gcount())
      data.insert(data.end(), chunk, chunk + std::cin.gcount());
    auto ir = mnt.resolve(path);
    if (!ir.ok()) {
      if (ir.err != Errc::not_found) return fail("write", ir.err);
      auto cr = mnt.create(path);
      if (!cr.ok()) return fail("write", cr.err);
      ir = cr;
    }
    if (!c_write->count("--offset")) {
      auto ts = mnt.truncate(path, 0);
      if (!ts.ok()) return fail("write", ts.err);
    }
    auto wr = mnt.write(*ir, offset, std::span<const u8>(data.data(), data.size()));
    if (!wr.ok()) return fail("write", wr.err);
    return 0;
  }
  if (c_mkdir->parsed()) {
    auto r = mnt.mkdir(path);
    if (!r.ok()) return fail("mkdir", r.err);
    return 0;
  }
  if (c_rm->parsed()) {
    auto st = mnt.unlink(path);
    if (st.err == Errc::is_dir) st = mnt.rmdir(path);
    if (!st.ok()) return fail("rm", st.err);
    return 0;
  }
  if (c_mv->parsed()) {
    auto st = mnt.rename(path, path2);
    if (!st.ok()) return fail("mv", st.err);
    return 0;
  }
  if (c_stat->parsed()) {
    auto at = mnt.getattr(path);
    if (!at.ok()) return fail("stat", at.err);
    std::cout << "ino: " << at->ino << "\n"
              << "mode: 0" << std::oct << at->mode << std::dec << "\n"
              << "uid: " << at->uid << "\n"
              << "gid: " << at->gid << "\n"
              << "size: " << at->size << "\n"
              << "mtime_ns: " << at->mtime_ns << "\n";
    return 0;
  }
  if (c_trunc->parsed()) {
    auto st = mnt.truncate(path, size);
    if (!st.ok()) return fail("truncate", st.err);
    return 0;
  }
  return 5;
}
