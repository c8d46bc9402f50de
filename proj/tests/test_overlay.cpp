#include <algorithm>

#include <doctest.h>

#include "daxfs/overlay.hpp"
#include "test_util.hpp"

using namespace daxfs;
using namespace daxfs::test;

namespace {

struct OvFix {
  SharedRegion rg;
  Superblock sb;
  Overlay ov;

  explicit OvFix(u64 buckets = 64, u64 pool = 1 << 20) {
    LayoutConfig cfg;
    cfg.mode = MountMode::empty;
    cfg.bucket_count = buckets;
    cfg.pool_len = pool;
    auto sbr = layout(cfg);
    REQUIRE(sbr.ok());
    sb = *sbr;
    auto rgr = SharedRegion::map_anon(sb.total_size);
    REQUIRE(rgr.ok());
    rg = std::move(*rgr);
    REQUIRE(write_superblock(rg, sb).ok());
    REQUIRE(Overlay::format(rg, sb, buckets, pool).ok());
    auto ovr = Overlay::attach(rg, sb);
    REQUIRE(ovr.ok());
    ov = *ovr;
  }

  Result<Overlay::InsertOutcome> ins(u64 key) {
    return ov.insert(key, EntryType::inode, [&]() -> Result<u64> {
      auto off = ov.alloc(EntryType::inode, kPoolInodeSize);
      if (!off.ok()) return off;
      PoolInode pi;
      pi.size = key;
      ov.write_pool_inode(*off, pi);
      return off;
    });
  }
};

}  // namespace

TEST_CASE("fnv1a matches published vectors") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("hello", 5) == 0xa430d84680aabd0bull);
  CHECK(fnv1a63("hello", 5) == (0xa430d84680aabd0bull & 0x7FFFFFFFFFFFFFFFull));
}

TEST_CASE("key encoding") {
  CHECK(key_inode(1) == ((1ull << 20) | 0xFFFFF));
  CHECK(key_dirlist(1) == ((1ull << 20) | 0xFFFFE));
  CHECK(*key_data(5, 7) == ((5ull << 20) | 7));
  CHECK(key_data(5, 0xFFFFE).err == Errc::invalid);  // pgoff ceiling
  CHECK(key_data(0, 0).err == Errc::invalid);
  CHECK(key_data(1ull << 43, 0).err == Errc::invalid);  // ino ceiling
  CHECK(*key_data(5, 0xFFFFD) == ((5ull << 20) | 0xFFFFD));

  // Dirent key: FNV-1a over the parent ino's 8 LE bytes, then the name,
  // masked to 63 bits.  Recomputed here from first principles.
  u64 parent = 3;
  u8 le[8];
  for (int i = 0; i < 8; i++) le[i] = (u8)(parent >> (8 * i));
  u64 h = 14695981039346656037ull;
  auto mix = [&](const void* d, size_t n) {
    const u8* p = (const u8*)d;
    for (size_t i = 0; i < n; i++) h = (h ^ p[i]) * 1099511628211ull;
  };
  mix(le, 8);
  mix("name", 4);
  CHECK(key_dirent(3, "name") == (h & 0x7FFFFFFFFFFFFFFFull));
}

TEST_CASE("pool entry sizes") {
  CHECK(entry_size(EntryType::inode) == 32);
  CHECK(entry_size(EntryType::data) == 4096);
  CHECK(entry_size(EntryType::dirent) == 296);
  CHECK(entry_size(EntryType::dirlist) == 16);
  CHECK(entry_align(EntryType::data) == 4096);
  CHECK(entry_align(EntryType::dirent) == 8);
}

TEST_CASE("insert then lookup round-trips") {
  OvFix f;
  u64 key = 12345;
  auto out = f.ins(key);
  REQUIRE(out.ok());
  CHECK(out->inserted);
  u64 probes = 0;
  auto po = f.ov.lookup(key, &probes);
  REQUIRE(po.has_value());
  CHECK(*po == out->pool_off);
  CHECK(probes == 1);
  CHECK(f.ov.read_pool_inode(*po).size == key);
  CHECK_FALSE(f.ov.lookup(99999).has_value());

  // Duplicate insert reports the existing entry.
  auto dup = f.ins(key);
  REQUIRE(dup.ok());
  CHECK_FALSE(dup->inserted);
  CHECK(dup->pool_off == out->pool_off);
  CHECK(f.ov.stat(kStInsertExists) == 1);
}

TEST_CASE("delete leaves the bucket occupied forever") {
  OvFix f;
  u64 key = 7;
  auto out = f.ins(key);
  REQUIRE(out.ok());
  auto bidx = f.ov.bucket_index_of(key);
  REQUIRE(bidx.has_value());
  auto [sk_before, po_before] = f.ov.bucket(*bidx);
  CHECK(po_before == out->pool_off);

  auto erased = f.ov.erase(key, EntryType::inode);
  REQUIRE(erased.ok());
  CHECK(*erased == out->pool_off);
  auto [sk_after, po_after] = f.ov.bucket(*bidx);
  CHECK(sk_after == sk_before);  // state_key untouched: still USED, same key
  CHECK(po_after == 0);          // deleted sentinel
  CHECK_FALSE(f.ov.lookup(key).has_value());
  CHECK(f.ov.erase(key, EntryType::inode).err == Errc::not_found);
  CHECK(f.ov.free_list_len(EntryType::inode) == 1);

  // Re-insert revives the same bucket and recycles the freed entry.
  auto again = f.ins(key);
  REQUIRE(again.ok());
  CHECK(again->inserted);
  CHECK(again->pool_off == out->pool_off);  // LIFO free list reuse
  CHECK(*f.ov.bucket_index_of(key) == *bidx);
  CHECK(f.ov.free_list_len(EntryType::inode) == 0);
}

TEST_CASE("linear probing walks past collisions and deletions") {
  OvFix f(64);
  // Same home bucket (key % 64 == 1).
  u64 a = 1, b = 65, c = 129;
  REQUIRE(f.ins(a)->inserted);
  REQUIRE(f.ins(b)->inserted);
  REQUIRE(f.ins(c)->inserted);
  CHECK(*f.ov.bucket_index_of(a) == 1);
  CHECK(*f.ov.bucket_index_of(b) == 2);
  CHECK(*f.ov.bucket_index_of(c) == 3);
  u64 probes = 0;
  REQUIRE(f.ov.lookup(c, &probes).has_value());
  CHECK(probes == 3);

  // Deleting the middle key must not break the probe chain to c.
  REQUIRE(f.ov.erase(b, EntryType::inode).ok());
  REQUIRE(f.ov.lookup(c, &probes).has_value());
  CHECK(probes == 3);
  CHECK_FALSE(f.ov.lookup(b).has_value());
}

TEST_CASE("table full returns no_space") {
  OvFix f(8);
  int inserted = 0;
  for (u64 k = 1; k <= 8; k++)
    if (f.ins(k * 97)->inserted) inserted++;
  CHECK(inserted == 8);
  auto out = f.ins(9999);
  CHECK(out.err == Errc::no_space);
}

TEST_CASE("batch allocation is contiguous and aligned") {
  OvFix f;
  auto batch = f.ov.alloc_batch(EntryType::data, kPageSize, 4);
  REQUIRE(batch.ok());
  CHECK(*batch % kPageSize == 0);
  auto next = f.ov.alloc_batch(EntryType::data, kPageSize, 1);
  REQUIRE(next.ok());
  CHECK(*next == *batch + 4 * kPageSize);
  CHECK(f.ov.pool_consumed() >= 5 * kPageSize);
}

TEST_CASE("free list pops in LIFO order") {
  OvFix f;
  u64 offs[4];
  for (auto& o : offs) o = *f.ov.alloc(EntryType::dirent, kPoolDirentSize);
  for (auto o : offs) f.ov.free_entry(EntryType::dirent, o);
  CHECK(f.ov.free_list_len(EntryType::dirent) == 4);
  for (int i = 3; i >= 0; i--) {
    auto got = f.ov.alloc(EntryType::dirent, kPoolDirentSize);
    REQUIRE(got.ok());
    CHECK(*got == offs[i]);
  }
  CHECK(f.ov.free_list_len(EntryType::dirent) == 0);
}

TEST_CASE("pool exhaustion") {
  OvFix f(64, 2 * kPageSize);
  REQUIRE(f.ov.alloc_batch(EntryType::data, kPageSize, 1).ok());
  // The pool base is page-aligned, so at most two pages fit.
  auto second = f.ov.alloc_batch(EntryType::data, kPageSize, 1);
  if (second.ok()) CHECK(f.ov.alloc_batch(EntryType::data, kPageSize, 1).err == Errc::no_space);
  else CHECK(second.err == Errc::no_space);
}

TEST_CASE("dirent add, resolve, tombstone, revive") {
  OvFix f;
  REQUIRE(f.ov.dirent_add(1, "f", 5, 0100644, nullptr).ok());
  auto hit = f.ov.dirent_resolve(1, "f");
  REQUIRE(hit.has_value());
  CHECK(hit->target_ino == 5);
  CHECK_FALSE(hit->tombstone);
  CHECK(f.ov.dirent_lookup(1, "f", nullptr)->first == 5);

  // Same name again: exists.
  CHECK(f.ov.dirent_add(1, "f", 6, 0100644, nullptr).err == Errc::exists);

  REQUIRE(f.ov.dirent_tombstone(1, "f", nullptr).ok());
  CHECK_FALSE(f.ov.dirent_lookup(1, "f", nullptr).has_value());
  CHECK(f.ov.dirent_resolve(1, "f")->tombstone);
  CHECK(f.ov.dirent_tombstone(1, "f", nullptr).err == Errc::not_found);

  // Re-adding revives the name with the new target.
  REQUIRE(f.ov.dirent_add(1, "f", 9, 0100644, nullptr).ok());
  CHECK(f.ov.dirent_lookup(1, "f", nullptr)->first == 9);

  auto listing = f.ov.dir_iter(1, nullptr);
  REQUIRE(listing.size() == 1);
  CHECK(listing[0].name == "f");
  CHECK(listing[0].ino == 9);
}

TEST_CASE("dirent names are validated") {
  OvFix f;
  CHECK(f.ov.dirent_add(1, "", 5, 0, nullptr).err == Errc::invalid);
  CHECK(f.ov.dirent_add(1, "a/b", 5, 0, nullptr).err == Errc::invalid);
  CHECK(f.ov.dirent_add(1, std::string(255, 'x'), 5, 0, nullptr).err == Errc::invalid);
  CHECK(f.ov.dirent_add(1, std::string(254, 'x'), 5, 0, nullptr).ok());
}

TEST_CASE("tombstones shadow base-image names") {
  TempDir td;
  make_tree(td.file("src"));
  REQUIRE(build_image(td.file("src"), td.file("img"), MountMode::split,
                      td.file("img.dat")).ok());
  auto rg = SharedRegion::map_file(td.file("img"), 0, false);
  REQUIRE(rg.ok());
  auto sb = read_superblock(*rg);
  REQUIRE(sb.ok());
  auto ovr = Overlay::attach(*rg, *sb);
  REQUIRE(ovr.ok());
  Overlay& ov = *ovr;
  BaseImage base(*rg, *sb);

  CHECK(ov.dirent_lookup(1, "hello.txt", &base)->first == 4);
  CHECK(ov.dirent_add(1, "hello.txt", 9, 0, &base).err == Errc::exists);

  REQUIRE(ov.dirent_tombstone(1, "hello.txt", &base).ok());
  CHECK_FALSE(ov.dirent_lookup(1, "hello.txt", &base).has_value());
  auto names = [&] {
    std::vector<std::string> v;
    for (auto& e : ov.dir_iter(1, &base)) v.push_back(e.name);
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(names() == std::vector<std::string>{"bin", "docs", "link"});

  // A new overlay entry under the old name shadows the base again.
  REQUIRE(ov.dirent_add(1, "hello.txt", 42, 0100644, &base).ok());
  CHECK(ov.dirent_lookup(1, "hello.txt", &base)->first == 42);
  CHECK(names() == std::vector<std::string>{"bin", "docs", "hello.txt", "link"});
}

TEST_CASE("stats counters advance") {
  OvFix f;
  CHECK(f.ov.stat(kStInserts) == 0);
  f.ins(5);
  f.ov.lookup(5);
  f.ov.lookup(6);
  CHECK(f.ov.stat(kStInserts) == 1);
  CHECK(f.ov.stat(kStAllocs) == 1);
  CHECK(f.ov.stat(kStLookups) == 2);
  CHECK(f.ov.stat(kStLookupHits) == 1);
  CHECK(f.ov.stat(kStProbes) >= 1);
}
