#include "daxfs/pcache.hpp"

#include <chrono>
#include <cstring>
#include <thread>

namespace daxfs {

namespace {

u64 get64(const u8* p) {
  u64 v;
  std::memcpy(&v, p, 8);
  return v;
}
void put64(u8* p, u64 v) { std::memcpy(p, &v, 8); }

constexpr int kGetRetryCap = 10000;

}  // namespace

Status Pcache::format(SharedRegion& rg, const Superblock& sb, u64 slot_count) {
  if (!sb.has_pcache() || slot_count == 0) return Errc::invalid;
  u64 meta = page_align(kPageSize + slot_count * kPcacheSlotMetaSize);
  if (meta + slot_count * kPageSize > sb.pcache_len) return Errc::invalid;
  u8* h = rg.data() + sb.pcache_off;
  std::memset(h, 0, kPageSize);
  put64(h + pch_off::magic, kPcacheMagic);
  put64(h + pch_off::slot_count, slot_count);
  std::memset(rg.data() + sb.pcache_off + kPageSize, 0, meta - kPageSize);
  return ok_status();
}

Result<Pcache> Pcache::attach(SharedRegion& rg, const Superblock& sb) {
  if (!sb.has_pcache()) return Errc::invalid;
  // Overflow-safe geometry checks: the header may be hostile.
  if (sb.pcache_off % kPageSize || sb.pcache_off > rg.size() ||
      sb.pcache_len > rg.size() - sb.pcache_off)
    return Errc::bad_format;
  const u8* h = rg.data() + sb.pcache_off;
  if (get64(h + pch_off::magic) != kPcacheMagic) return Errc::bad_format;
  Pcache pc;
  pc.rg_ = &rg;
  pc.hdr_ = sb.pcache_off;
  pc.slots_ = get64(h + pch_off::slot_count);
  if (pc.slots_ == 0 || pc.slots_ > sb.pcache_len / kPageSize) return Errc::bad_format;
  pc.meta_base_ = sb.pcache_off + kPageSize;
  pc.data_base_ = sb.pcache_off + page_align(kPageSize + pc.slots_ * kPcacheSlotMetaSize);
  u64 need = pc.data_base_ - sb.pcache_off + pc.slots_ * kPageSize;
  if (need > sb.pcache_len) return Errc::bad_format;
  return pc;
}

u64 Pcache::hash_slot(u64 tag) const {
  u8 buf[8];
  put64(buf, tag);
  return fnv1a63(buf, 8) % slots_;
}

Result<u32> Pcache::get(u64 tag, const FillFn& fill, bool* filled) {
  u64 start = hash_slot(tag);
  for (int attempt = 0; attempt < kGetRetryCap; attempt++) {
    std::optional<u32> free_slot;
    for (u64 i = 0; i < kProbeWindow && i < slots_; i++) {
      u32 idx = (u32)((start + i) % slots_);
      u64 moff = meta_off(idx);
      for (;;) {
        u64 w = rg_->load64_acquire(moff);
        u64 st = slot_state(w);
        if (st == kSlotValid && slot_tag(w) == tag) {
          u64 rc = slot_refcount(w);
          if (rc >= kSlotMaxRef) {
            // 4-bit refcount saturated; back off and retry the whole probe.
            std::this_thread::yield();
            break;
          }
          auto [won, obs] = rg_->cas64(moff, w, w + (1ull << kSlotRefShift));
          if (!won) {
            (void)obs;
            continue;
          }
          rg_->store32_relaxed(moff + 8, 1);  // ref_bit: recently used
          return idx;
        }
        if (st == kSlotPending && slot_tag(w) == tag) {
          // Another requester is filling this page: busy-poll until VALID.
          bump(kPcDedupWaits);
          auto deadline =
              std::chrono::steady_clock::now() + std::chrono::milliseconds(100);
          for (;;) {
            u64 cur = rg_->load64_acquire(moff);
            if (cur != w) break;
            if (std::chrono::steady_clock::now() > deadline) {
              // Filler presumed dead; reclaim the slot.  A late filler's
              // PENDING->VALID CAS fails because the word changed.
              if (rg_->cas64(moff, w, kSlotFree).first) bump(kPcPendingReclaims);
              break;
            }
            std::this_thread::yield();
          }
          continue;  // re-evaluate the slot
        }
        if (st == kSlotFree && !free_slot) free_slot = idx;
        break;
      }
    }

    if (free_slot) {
      u32 idx = *free_slot;
      u64 moff = meta_off(idx);
      u64 pending = make_slot_word(kSlotPending, 0, tag);
      auto [won, obs] = rg_->cas64(moff, kSlotFree, pending);
      if (!won) {
        (void)obs;
        bump(kPcGetRetries);
        continue;  // lost the claim; rescan
      }
      auto st = fill(std::span<u8, kPageSize>(slot_data_mut(idx), kPageSize));
      if (!st.ok()) {
        rg_->cas64(moff, pending, kSlotFree);
        bump(kPcFillErrors);
        return st.err;
      }
      SharedRegion::write_fence();
      // The filler leaves pinned: VALID with refcount=1 in one transition, so
      // an evictor can never free the slot between publish and pin.
      u64 valid = make_slot_word(kSlotValid, 1, tag);
      bool ok = rg_->cas64(moff, pending, valid).first;
      if (!ok) {
        // Reclaimed from under us after the poll timeout; retry cleanly.
        bump(kPcGetRetries);
        continue;
      }
      bump(kPcFills);
      if (filled) *filled = true;
      rg_->store32_relaxed(moff + 8, 1);
      return idx;
    }

    if (!evict(start)) {
      std::this_thread::yield();
      bump(kPcGetRetries);
    }
  }
  return Errc::busy;
}

void Pcache::put(u32 slot) {
  u64 moff = meta_off(slot);
  for (;;) {
    u64 w = rg_->load64_acquire(moff);
    if (slot_state(w) != kSlotValid || slot_refcount(w) == 0)
      throw std::logic_error("pc_put without a pin");
    auto [won, obs] = rg_->cas64(moff, w, w - (1ull << kSlotRefShift));
    if (won) return;
    (void)obs;
  }
}

std::optional<u32> Pcache::scan_window(u64 start, bool ignore_ref_bit) {
  for (u64 i = 0; i < kProbeWindow && i < slots_; i++) {
    u32 idx = (u32)((start + i) % slots_);
    u64 moff = meta_off(idx);
    u64 w = rg_->load64_acquire(moff);
    if (slot_state(w) != kSlotValid || slot_refcount(w) != 0) continue;
    if (!ignore_ref_bit && rg_->load32_relaxed(moff + 8) != 0) continue;
    // Full-word CAS: a concurrent pin changes the word and defeats eviction.
    if (rg_->cas64(moff, w, kSlotFree).first) {
      rg_->store32_relaxed(moff + 8, 0);
      return idx;
    }
  }
  return std::nullopt;
}

std::optional<u32> Pcache::evict(u64 window_start) {
  // Phase 1: cold victim (VALID, ref_bit=0, refcount=0).
  if (auto v = scan_window(window_start, false)) {
    bump(kPcEvictP1);
    return v;
  }
  // Phase 2: clear ref_bit across the window and yield briefly.
  for (u64 i = 0; i < kProbeWindow && i < slots_; i++) {
    u32 idx = (u32)((window_start + i) % slots_);
    rg_->store32_relaxed(meta_off(idx) + 8, 0);
  }
  bump(kPcEvictP2Clears);
  std::this_thread::yield();
  // Phase 3: re-scan; force-evict the first unpinned VALID slot if needed.
  if (auto v = scan_window(window_start, false)) {
    bump(kPcEvictP3);
    return v;
  }
  if (auto v = scan_window(window_start, true)) {
    bump(kPcEvictP3);
    return v;
  }
  return std::nullopt;  // everything pinned or PENDING
}

std::optional<u64> Pcache::sweep() {
  u64 hoff = hdr_ + pch_off::evict_hand;
  u64 h = rg_->load64_acquire(hoff);
  auto [won, obs] = rg_->cas64(hoff, h, h + kSweepStride);
  if (!won) {
    (void)obs;
    bump(kPcSweepLosses);
    return std::nullopt;
  }
  u64 start = h % slots_;
  for (u64 i = 0; i < kSweepStride && i < slots_; i++) {
    u32 idx = (u32)((start + i) % slots_);
    u64 w = rg_->load64_relaxed(meta_off(idx));
    if (slot_state(w) == kSlotValid) rg_->store32_relaxed(meta_off(idx) + 8, 0);
  }
  bump(kPcSweepWins);
  return h;
}

}  // namespace daxfs
