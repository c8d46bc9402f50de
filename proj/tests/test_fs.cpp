#include <cstring>
#include <random>

#include <doctest.h>

#include "daxfs/fs.hpp"
#include "test_util.hpp"

using namespace daxfs;
using namespace daxfs::test;

namespace {

std::string read_all(Mount& m, const std::string& path) {
  auto at = m.getattr(path);
  REQUIRE(at.ok());
  std::string out(at->size, '\0');
  auto n = m.read(at->ino, 0, std::span<u8>((u8*)out.data(), out.size()));
  REQUIRE(n.ok());
  out.resize(*n);
  return out;
}

Result<u64> write_str(Mount& m, const std::string& path, u64 off,
                      const std::string& s) {
  auto ino = m.resolve(path);
  if (!ino.ok()) return ino.err;
  return m.write(*ino, off, std::span<const u8>((const u8*)s.data(), s.size()));
}

}  // namespace

TEST_CASE("static mount: read-only view of the built tree") {
  TempDir td;
  make_tree(td.file("src"));
  REQUIRE(build_image(td.file("src"), td.file("img"), MountMode::static_).ok());
  auto mr = Mount::open(td.file("img"));
  REQUIRE(mr.ok());
  Mount& m = **mr;
  CHECK(m.mode() == MountMode::static_);
  CHECK_FALSE(m.writable());

  CHECK(read_all(m, "/hello.txt") == "hello world\n");
  CHECK(read_all(m, "/docs/readme.md") == std::string(5000, 'r'));
  CHECK(read_all(m, "/link") == "hello world\n");  // via the symlink
  CHECK(*m.readlink("/link") == "hello.txt");

  auto ls = m.readdir("/");
  REQUIRE(ls.ok());
  CHECK(ls->size() == 4);

  CHECK(m.create("/new").err == Errc::read_only);
  CHECK(m.unlink("/hello.txt").err == Errc::read_only);
  CHECK(m.truncate("/hello.txt", 0).err == Errc::read_only);
  CHECK(m.resolve("/absent").err == Errc::not_found);
  CHECK(m.resolve("/hello.txt/x").err == Errc::not_dir);
  CHECK(m.resolve("relative").err == Errc::invalid);
  CHECK(m.resolve("/a/../b").err == Errc::invalid);
}

TEST_CASE("empty mount: namespace lifecycle") {
  TempDir td;
  REQUIRE(build_image("", td.file("img"), MountMode::empty).ok());
  auto mr = Mount::open(td.file("img"));
  REQUIRE(mr.ok());
  Mount& m = **mr;
  CHECK(m.writable());

  REQUIRE(m.mkdir("/d").ok());
  REQUIRE(m.create("/d/f").ok());
  CHECK(m.create("/d/f").err == Errc::exists);
  CHECK(m.mkdir("/d").err == Errc::exists);
  CHECK(m.create("/nope/f").err == Errc::not_found);

  REQUIRE(write_str(m, "/d/f", 0, "payload").ok());
  CHECK(read_all(m, "/d/f") == "payload");

  CHECK(m.rmdir("/d").err == Errc::not_empty);
  CHECK(m.unlink("/d").err == Errc::is_dir);
  CHECK(m.rmdir("/d/f").err == Errc::not_dir);

  REQUIRE(m.rename("/d/f", "/g").ok());
  CHECK(m.resolve("/d/f").err == Errc::not_found);
  CHECK(read_all(m, "/g") == "payload");
  REQUIRE(m.rmdir("/d").ok());
  CHECK(m.resolve("/d").err == Errc::not_found);

  REQUIRE(m.unlink("/g").ok());
  CHECK(m.unlink("/g").err == Errc::not_found);

  auto root = m.readdir("/");
  REQUIRE(root.ok());
  CHECK(root->empty());
}

TEST_CASE("attributes and setattr") {
  TempDir td;
  REQUIRE(build_image("", td.file("img"), MountMode::empty).ok());
  auto mr = Mount::open(td.file("img"));
  REQUIRE(mr.ok());
  Mount& m = **mr;
  REQUIRE(m.create("/f", 0640).ok());
  auto at = m.getattr("/f");
  REQUIRE(at.ok());
  CHECK(at->mode == (0100000u | 0640));
  CHECK(at->size == 0);

  REQUIRE(m.setattr("/f", 0600, 7, 8).ok());
  at = m.getattr("/f");
  CHECK(at->mode == (0100000u | 0600));
  CHECK(at->uid == 7);
  CHECK(at->gid == 8);

  auto rootat = m.getattr("/");
  REQUIRE(rootat.ok());
  CHECK(rootat->is_dir());
  CHECK(rootat->ino == kRootIno);
}

TEST_CASE("symlinks resolve with a depth cap") {
  TempDir td;
  REQUIRE(build_image("", td.file("img"), MountMode::empty).ok());
  auto mr = Mount::open(td.file("img"));
  REQUIRE(mr.ok());
  Mount& m = **mr;
  REQUIRE(m.create("/target").ok());
  REQUIRE(write_str(m, "/target", 0, "T").ok());
  REQUIRE(m.mkdir("/sub").ok());
  REQUIRE(m.symlink("/abs", "/target").ok());
  REQUIRE(m.symlink("/sub/dots", "../target").ok());  // stored verbatim...
  CHECK(m.resolve("/sub/dots").err == Errc::invalid);  // ...but dot-dot never resolves
  REQUIRE(m.symlink("/sub/rel", "x").ok());
  REQUIRE(m.create("/sub/x").ok());

  CHECK(read_all(m, "/abs") == "T");
  CHECK(m.resolve("/sub/rel").value == m.resolve("/sub/x").value);

  // 8 chained links resolve; a cycle reports loop.
  REQUIRE(m.symlink("/l1", "/target").ok());
  for (int i = 2; i <= 8; i++)
    REQUIRE(m.symlink("/l" + std::to_string(i), "/l" + std::to_string(i - 1)).ok());
  CHECK(read_all(m, "/l8") == "T");
  REQUIRE(m.symlink("/loop", "/loop").ok());
  CHECK(m.resolve("/loop").err == Errc::loop);
}

TEST_CASE("split mount: COW leaves the base media untouched") {
  TempDir td;
  make_tree(td.file("src"));
  REQUIRE(build_image(td.file("src"), td.file("img"), MountMode::split,
                      td.file("img.dat")).ok());
  u64 backing_before = hash_file(td.file("img.dat"));
  auto mr = Mount::open(td.file("img"));
  REQUIRE(mr.ok());
  Mount& m = **mr;
  CHECK(m.mode() == MountMode::split);

  // Reads page through the pcache from the backing file.
  CHECK(read_all(m, "/bin/tool") == std::string(12345, 'x'));
  CHECK(read_all(m, "/hello.txt") == "hello world\n");

  // Partial overwrite in the middle of a page: COW preserves neighbors.
  REQUIRE(write_str(m, "/bin/tool", 100, "EDIT").ok());
  std::string want(12345, 'x');
  want.replace(100, 4, "EDIT");
  CHECK(read_all(m, "/bin/tool") == want);
  CHECK(hash_file(td.file("img.dat")) == backing_before);

  // Overwrite crossing the first page boundary.
  REQUIRE(write_str(m, "/bin/tool", 4090, "0123456789").ok());
  want.replace(4090, 10, "0123456789");
  CHECK(read_all(m, "/bin/tool") == want);

  // Unmodified file still reads from base.
  CHECK(read_all(m, "/docs/readme.md") == std::string(5000, 'r'));

  // Another mount observes the overlay edits.
  auto mr2 = Mount::open(td.file("img"));
  REQUIRE(mr2.ok());
  CHECK(read_all(**mr2, "/bin/tool") == want);
  CHECK(hash_file(td.file("img.dat")) == backing_before);
}

TEST_CASE("truncate zeroes tails and cut ranges survive regrow") {
  TempDir td;
  make_tree(td.file("src"));
  REQUIRE(build_image(td.file("src"), td.file("img"), MountMode::split,
                      td.file("img.dat")).ok());
  auto mr = Mount::open(td.file("img"));
  REQUIRE(mr.ok());
  Mount& m = **mr;

  // Shrink a base-backed file mid-page, then regrow: the hole reads zero.
  REQUIRE(m.truncate("/bin/tool", 5000).ok());
  CHECK(m.getattr("/bin/tool")->size == 5000);
  CHECK(read_all(m, "/bin/tool") == std::string(5000, 'x'));
  REQUIRE(m.truncate("/bin/tool", 9000).ok());
  std::string want = std::string(5000, 'x') + std::string(4000, '\0');
  CHECK(read_all(m, "/bin/tool") == want);

  // Same dance on a fresh overlay file.
  REQUIRE(m.create("/f").ok());
  REQUIRE(write_str(m, "/f", 0, std::string(10000, 'a')).ok());
  REQUIRE(m.truncate("/f", 3000).ok());
  REQUIRE(m.truncate("/f", 6000).ok());
  CHECK(read_all(m, "/f") == std::string(3000, 'a') + std::string(3000, '\0'));

  REQUIRE(m.truncate("/f", 0).ok());
  CHECK(read_all(m, "/f").empty());
  CHECK(m.truncate("/", 0).err == Errc::is_dir);
}

TEST_CASE("sparse writes read back as holes") {
  TempDir td;
  REQUIRE(build_image("", td.file("img"), MountMode::empty).ok());
  auto mr = Mount::open(td.file("img"));
  REQUIRE(mr.ok());
  Mount& m = **mr;
  REQUIRE(m.create("/s").ok());
  REQUIRE(write_str(m, "/s", 3 * kPageSize + 5, "XYZ").ok());
  auto at = m.getattr("/s");
  CHECK(at->size == 3 * kPageSize + 8);
  std::string all = read_all(m, "/s");
  CHECK(all.size() == 3 * kPageSize + 8);
  CHECK(all.substr(0, 3 * kPageSize) == std::string(3 * kPageSize, '\0'));
  CHECK(all.substr(3 * kPageSize) == std::string("\0\0\0\0\0XYZ", 8));
}

TEST_CASE("size is a max over concurrent-style out-of-order writes") {
  TempDir td;
  REQUIRE(build_image("", td.file("img"), MountMode::empty).ok());
  auto mr = Mount::open(td.file("img"));
  REQUIRE(mr.ok());
  Mount& m = **mr;
  REQUIRE(m.create("/f").ok());
  REQUIRE(write_str(m, "/f", 50000, "tail").ok());
  REQUIRE(write_str(m, "/f", 0, "head").ok());
  CHECK(m.getattr("/f")->size == 50004);  // low write must not shrink the file
}

TEST_CASE("read coalescing merges contiguous pages into one copy") {
  TempDir td;
  REQUIRE(build_image("", td.file("img"), MountMode::empty).ok());
  {
    auto mr = Mount::open(td.file("img"));
    REQUIRE(mr.ok());
    REQUIRE((*mr)->create("/big").ok());
    std::string data(64 * kPageSize, '\0');
    for (size_t i = 0; i < data.size(); i++) data[i] = (char)(i * 131 / kPageSize);
    REQUIRE(write_str(**mr, "/big", 0, data).ok());
  }

  auto mr = Mount::open(td.file("img"));
  REQUIRE(mr.ok());
  Mount& m = **mr;
  std::string a = read_all(m, "/big");
  CHECK(m.copies_issued() == 1);  // one batch-allocated extent, one memcpy
  CHECK(m.coalesced_runs() == 1);

  auto mr2 = Mount::open(td.file("img"));
  REQUIRE(mr2.ok());
  (*mr2)->set_coalesce(false);
  std::string b = read_all(**mr2, "/big");
  CHECK((*mr2)->copies_issued() == 64);  // one per page
  CHECK(a == b);
}

TEST_CASE("randomized ops match an in-memory byte model") {
  TempDir td;
  REQUIRE(build_image("", td.file("img"), MountMode::empty).ok());
  auto mr = Mount::open(td.file("img"));
  REQUIRE(mr.ok());
  Mount& m = **mr;
  REQUIRE(m.create("/f").ok());
  u64 ino = *m.resolve("/f");

  std::mt19937_64 rng(20260823);
  std::string model;
  constexpr u64 kMaxSize = 48 * kPageSize;
  for (int op = 0; op < 400; op++) {
    u64 kind = rng() % 10;
    if (kind < 6) {  // write
      u64 off = rng() % kMaxSize;
      u64 len = 1 + rng() % (3 * kPageSize);
      if (off + len > kMaxSize) len = kMaxSize - off;
      if (len == 0) continue;
      std::string chunk(len, '\0');
      for (auto& c : chunk) c = (char)(rng() & 0xff);
      REQUIRE(m.write(ino, off, std::span<const u8>((const u8*)chunk.data(), len)).ok());
      if (model.size() < off + len) model.resize(off + len, '\0');
      model.replace(off, len, chunk);
    } else if (kind < 8) {  // truncate
      u64 ns = rng() % kMaxSize;
      REQUIRE(m.truncate("/f", ns).ok());
      model.resize(ns, '\0');
    } else {  // full read-back comparison
      CHECK(read_all(m, "/f") == model);
    }
  }
  CHECK(read_all(m, "/f") == model);
  CHECK(m.getattr("/f")->size == model.size());
}

TEST_CASE("overlay pages shadow base pages after open") {
  TempDir td;
  make_tree(td.file("src"));
  REQUIRE(build_image(td.file("src"), td.file("img"), MountMode::split,
                      td.file("img.dat")).ok());
  auto m1 = Mount::open(td.file("img"));
  auto m2 = Mount::open(td.file("img"));
  REQUIRE(m1.ok());
  REQUIRE(m2.ok());
  // m2 reads the base page first (caches nothing but the pcache slot) ...
  CHECK(read_all(**m2, "/hello.txt") == "hello world\n");
  // ... then m1 COWs the page; m2 must observe the overlay version.
  REQUIRE(write_str(**m1, "/hello.txt", 0, "HELLO").ok());
  CHECK(read_all(**m2, "/hello.txt") == "HELLO world\n");
}

TEST_CASE("mount option validate rejects corrupt images") {
  TempDir td;
  REQUIRE(build_image("", td.file("img"), MountMode::empty).ok());
  {
    auto rg = SharedRegion::map_file(td.file("img"), 0, false);
    REQUIRE(rg.ok());
    rg->store64_relaxed(sb_off::magic, 0);
  }
  MountOptions opts;
  opts.validate = true;
  CHECK(Mount::open(td.file("img"), opts).err == Errc::bad_format);
}
