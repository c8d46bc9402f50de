#include <cstring>
#include <stdexcept>

#include <doctest.h>

#include "daxfs/pcache.hpp"
#include "test_util.hpp"

using namespace daxfs;
using namespace daxfs::test;

namespace {

struct PcFix {
  SharedRegion rg;
  Superblock sb;
  Pcache pc;

  explicit PcFix(u64 slots = 64) {
    LayoutConfig cfg;
    cfg.mode = MountMode::empty;
    cfg.bucket_count = 64;
    cfg.pool_len = kPageSize;
    cfg.slot_count = slots;
    auto sbr = layout(cfg);
    REQUIRE(sbr.ok());
    sb = *sbr;
    auto rgr = SharedRegion::map_anon(sb.total_size);
    REQUIRE(rgr.ok());
    rg = std::move(*rgr);
    REQUIRE(write_superblock(rg, sb).ok());
    REQUIRE(Pcache::format(rg, sb, slots).ok());
    auto pcr = Pcache::attach(rg, sb);
    REQUIRE(pcr.ok());
    pc = *pcr;
  }

  FillFn patt(u64 tag, int* fills = nullptr) {
    return [this, tag, fills](std::span<u8, kPageSize> dst) -> Status {
      (void)this;
      if (fills) (*fills)++;
      u64 base = fnv1a64(&tag, 8);
      for (u64 j = 0; j < kPageSize / 8; j++) {
        u64 v = base + j;
        std::memcpy(dst.data() + j * 8, &v, 8);
      }
      return ok_status();
    };
  }

  bool check(u32 slot, u64 tag) {
    u64 base = fnv1a64(&tag, 8);
    for (u64 j = 0; j < kPageSize / 8; j++) {
      u64 v;
      std::memcpy(&v, pc.slot_data(slot) + j * 8, 8);
      if (v != base + j) return false;
    }
    return true;
  }
};

}  // namespace

TEST_CASE("slot word packing") {
  u64 w = make_slot_word(kSlotValid, 3, 0x1234);
  CHECK(slot_state(w) == kSlotValid);
  CHECK(slot_refcount(w) == 3);
  CHECK(slot_tag(w) == 0x1234);
  CHECK(w == (2ull | (3ull << 2) | (0x1234ull << 6)));
  CHECK(pcache_tag(5, 7) == ((5ull << 20) | 7));
}

TEST_CASE("cold fill pins the slot; a second get deduplicates") {
  PcFix f;
  int fills = 0;
  u64 tag = 42;
  bool filled = false;
  auto s1 = f.pc.get(tag, f.patt(tag, &fills), &filled);
  REQUIRE(s1.ok());
  CHECK(filled);
  CHECK(fills == 1);
  u64 w = f.pc.slot_word(*s1);
  CHECK(slot_state(w) == kSlotValid);
  CHECK(slot_refcount(w) == 1);  // filler ends pinned
  CHECK(slot_tag(w) == tag);
  CHECK(f.pc.ref_bit(*s1) == 1);
  CHECK(f.check(*s1, tag));

  filled = false;
  auto s2 = f.pc.get(tag, f.patt(tag, &fills), &filled);
  REQUIRE(s2.ok());
  CHECK(*s2 == *s1);
  CHECK_FALSE(filled);
  CHECK(fills == 1);  // no duplicate backing read
  CHECK(slot_refcount(f.pc.slot_word(*s1)) == 2);

  f.pc.put(*s1);
  f.pc.put(*s2);
  CHECK(slot_refcount(f.pc.slot_word(*s1)) == 0);
  CHECK(f.pc.stat(kPcFills) == 1);
}

TEST_CASE("fill failure frees the slot and surfaces the error") {
  PcFix f;
  auto bad = f.pc.get(7, [](std::span<u8, kPageSize>) -> Status {
    return Errc::io_error;
  });
  CHECK(bad.err == Errc::io_error);
  CHECK(f.pc.stat(kPcFillErrors) == 1);
  // The slot went back to FREE; a retry succeeds.
  auto ok = f.pc.get(7, f.patt(7));
  REQUIRE(ok.ok());
  f.pc.put(*ok);
}

TEST_CASE("put without a pin throws") {
  PcFix f;
  auto s = f.pc.get(9, f.patt(9));
  REQUIRE(s.ok());
  f.pc.put(*s);
  CHECK_THROWS_AS(f.pc.put(*s), std::logic_error);
  CHECK_THROWS_AS(f.pc.put((*s + 1) % (u32)f.pc.slot_count()), std::logic_error);
}

TEST_CASE("eviction phase 1 picks a cold slot") {
  PcFix f(8);  // one window covers the whole cache
  for (u64 t = 1; t <= 8; t++) {
    auto s = f.pc.get(t, f.patt(t));
    REQUIRE(s.ok());
    f.pc.put(*s);
  }
  // Slot for tag 3 is cold (ref_bit 0); the rest stay hot.
  u32 cold = 0;
  for (u32 i = 0; i < 8; i++)
    if (slot_tag(f.pc.slot_word(i)) == 3) cold = i;
  f.pc.set_ref_bit(cold, 0);

  auto victim = f.pc.evict(0);
  REQUIRE(victim.has_value());
  CHECK(*victim == cold);
  CHECK(slot_state(f.pc.slot_word(cold)) == kSlotFree);
  CHECK(f.pc.stat(kPcEvictP1) == 1);
  CHECK(f.pc.stat(kPcEvictP2Clears) == 0);
}

TEST_CASE("eviction phases 2+3 clear ref bits then force-evict") {
  PcFix f(8);
  for (u64 t = 1; t <= 8; t++) {
    auto s = f.pc.get(t, f.patt(t));
    REQUIRE(s.ok());
    f.pc.put(*s);
  }
  // Every slot hot: phase 1 finds nothing, phase 2 clears, phase 3 evicts.
  auto victim = f.pc.evict(0);
  REQUIRE(victim.has_value());
  CHECK(f.pc.stat(kPcEvictP1) == 0);
  CHECK(f.pc.stat(kPcEvictP2Clears) == 1);
  CHECK(f.pc.stat(kPcEvictP3) == 1);
  for (u32 i = 0; i < 8; i++)
    if (i != *victim) CHECK(f.pc.ref_bit(i) == 0);  // phase 2 side effect
}

TEST_CASE("pinned slots defeat eviction entirely") {
  PcFix f(8);
  std::vector<u32> slots;
  for (u64 t = 1; t <= 8; t++) {
    auto s = f.pc.get(t, f.patt(t));
    REQUIRE(s.ok());
    slots.push_back(*s);  // keep every slot pinned
  }
  CHECK_FALSE(f.pc.evict(0).has_value());
  for (u64 t = 1; t <= 8; t++) CHECK(f.check(slots[t - 1], t));
  // A get for a new tag cannot make progress and reports busy.
  auto blocked = f.pc.get(99, f.patt(99));
  CHECK(blocked.err == Errc::busy);
  for (u32 s : slots) f.pc.put(s);
  auto now_ok = f.pc.get(99, f.patt(99));
  REQUIRE(now_ok.ok());
  f.pc.put(*now_ok);
}

TEST_CASE("pending slot of a dead filler is reclaimed after the poll cap") {
  PcFix f(8);
  // Fabricate an abandoned PENDING slot for tag 5 in its probe window.
  u64 start = f.pc.window_of(5);
  u32 idx = (u32)(start % f.pc.slot_count());
  REQUIRE(f.pc.cas_slot_word(idx, 0, make_slot_word(kSlotPending, 0, 5)));
  auto s = f.pc.get(5, f.patt(5));  // waits ~100 ms, reclaims, fills
  REQUIRE(s.ok());
  CHECK(f.check(*s, 5));
  CHECK(f.pc.stat(kPcPendingReclaims) == 1);
  CHECK(f.pc.stat(kPcDedupWaits) >= 1);
  f.pc.put(*s);
}

TEST_CASE("sweep advances the hand by 64 and clears ref bits") {
  PcFix f(128);
  for (u64 t = 1; t <= 128; t++) {
    auto s = f.pc.get(t, f.patt(t));
    REQUIRE(s.ok());
    f.pc.put(*s);
  }
  for (u32 i = 0; i < 128; i++) REQUIRE(f.pc.ref_bit(i) == 1);

  auto h = f.pc.sweep();
  REQUIRE(h.has_value());
  CHECK(*h == 0);
  CHECK(f.pc.hand() == 64);
  for (u32 i = 0; i < 64; i++) CHECK(f.pc.ref_bit(i) == 0);
  for (u32 i = 64; i < 128; i++) CHECK(f.pc.ref_bit(i) == 1);

  auto h2 = f.pc.sweep();
  REQUIRE(h2.has_value());
  CHECK(*h2 == 64);
  CHECK(f.pc.hand() == 128);
  for (u32 i = 64; i < 128; i++) CHECK(f.pc.ref_bit(i) == 0);
  CHECK(f.pc.stat(kPcSweepWins) == 2);
}
