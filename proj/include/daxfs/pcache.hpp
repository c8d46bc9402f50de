#pragma once

#include <functional>
#include <optional>
#include <span>

#include "daxfs/format.hpp"
#include "daxfs/region.hpp"
#include "daxfs/types.hpp"

namespace daxfs {

// Slot word packing: bits[1:0] state, bits[5:2] refcount, bits[63:6] tag.
enum SlotState : u64 { kSlotFree = 0, kSlotPending = 1, kSlotValid = 2 };

constexpr u64 kSlotStateMask = 0x3;
constexpr u64 kSlotRefShift = 2;
constexpr u64 kSlotRefMask = 0xF << kSlotRefShift;
constexpr u64 kSlotTagShift = 6;
constexpr u64 kSlotMaxRef = 15;
constexpr u64 kProbeWindow = 8;
constexpr u64 kSweepStride = 64;

inline u64 slot_state(u64 w) { return w & kSlotStateMask; }
inline u64 slot_refcount(u64 w) { return (w & kSlotRefMask) >> kSlotRefShift; }
inline u64 slot_tag(u64 w) { return w >> kSlotTagShift; }
inline u64 make_slot_word(u64 state, u64 refcount, u64 tag) {
  return state | (refcount << kSlotRefShift) | (tag << kSlotTagShift);
}

inline u64 pcache_tag(u64 ino, u64 pgoff) {
  return ((ino << 20) | pgoff) & (~0ull >> kSlotTagShift);
}

// Shared pcache statistics counters (u64 words in the region header).
enum PcStat : u64 {
  kPcFills = 0,
  kPcDedupWaits,
  kPcEvictP1,
  kPcEvictP2Clears,
  kPcEvictP3,
  kPcSweepWins,
  kPcSweepLosses,
  kPcFillErrors,
  kPcGetRetries,
  kPcPendingReclaims,
  kPcStatCount,
};

// Reads one 4 KB backing page into dst; short reads zero-fill the tail.
using FillFn = std::function<Status(std::span<u8, kPageSize> dst)>;

// Shared demand-paged cache: slot state machine, duplicate-fill suppression,
// refcount pinning, and MH-clock eviction.  Safe from any process or thread.
class Pcache {
 public:
  Pcache() = default;
  static Result<Pcache> attach(SharedRegion& rg, const Superblock& sb);
  static Status format(SharedRegion& rg, const Superblock& sb, u64 slot_count);

  // Returns a pinned slot holding the page identified by tag, filling it from
  // the backing store on a cold miss.  Exactly one fill per occupancy of a
  // tag; concurrent requesters wait on PENDING instead of re-reading.
  Result<u32> get(u64 tag, const FillFn& fill, bool* filled = nullptr);
  void put(u32 slot);

  // Three-phase MH-clock victim selection over the 8-slot window.
  std::optional<u32> evict(u64 window_start);
  // Background clock sweep: one CAS advance of the shared hand by 64 slots;
  // the winner clears ref_bit across the window.  Returns the swept window
  // start, or nullopt when this caller lost the race.
  std::optional<u64> sweep();

  const u8* slot_data(u32 slot) const { return rg_->data() + data_base_ + (u64)slot * kPageSize; }
  u8* slot_data_mut(u32 slot) { return rg_->data() + data_base_ + (u64)slot * kPageSize; }

  u64 slot_count() const { return slots_; }
  u64 slot_word(u32 slot) const { return rg_->load64_acquire(meta_off(slot)); }
  u32 ref_bit(u32 slot) const { return rg_->load32_relaxed(meta_off(slot) + 8); }
  u64 hand() const { return rg_->load64_relaxed(hdr_ + pch_off::evict_hand); }
  u64 stat(PcStat s) const { return rg_->load64_relaxed(hdr_ + pch_off::stats + 8 * s); }
  u64 window_of(u64 tag) const { return hash_slot(tag); }

  // Test hooks: raw slot word CAS and ref_bit store.
  bool cas_slot_word(u32 slot, u64 expected, u64 desired) {
    return rg_->cas64(meta_off(slot), expected, desired).first;
  }
  void set_ref_bit(u32 slot, u32 v) { rg_->store32_relaxed(meta_off(slot) + 8, v); }

 private:
  u64 meta_off(u32 slot) const { return meta_base_ + (u64)slot * kPcacheSlotMetaSize; }
  u64 hash_slot(u64 tag) const;
  std::optional<u32> scan_window(u64 start, bool ignore_ref_bit);
  void bump(PcStat s, u64 n = 1) {
    rg_->fetch_add64_relaxed(hdr_ + pch_off::stats + 8 * s, n);
  }

  SharedRegion* rg_ = nullptr;
  u64 hdr_ = 0;
  u64 meta_base_ = 0;
  u64 data_base_ = 0;
  u64 slots_ = 0;
};

}  // namespace daxfs
