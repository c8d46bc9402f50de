#pragma once

#include <atomic>
#include <optional>
#include <string>

#include "daxfs/types.hpp"

namespace daxfs {

// Overrides DAXFS_ATOMIC_DELAY_NS for this process (stress workers set it
// after fork, once the parent has already primed the env cache).
void set_atomic_delay_ns(u64 ns);

// A contiguous byte range shared between processes, either backed by a file
// (MAP_SHARED) or anonymous.  All cross-process coordination words are 64-bit
// and accessed through the atomic helpers below; on big-endian hosts the
// little-endian byte image is what gets compared and swapped.
//
// DAXFS_ATOMIC_DELAY_NS, when set, injects a busy-wait of that many
// nanoseconds before each cas64, widening race windows for stress tests.
class SharedRegion {
 public:
  SharedRegion() = default;
  SharedRegion(const SharedRegion&) = delete;
  SharedRegion& operator=(const SharedRegion&) = delete;
  SharedRegion(SharedRegion&& o) noexcept { move_from(o); }
  SharedRegion& operator=(SharedRegion&& o) noexcept {
    if (this != &o) {
      unmap();
      move_from(o);
    }
    return *this;
  }
  ~SharedRegion() { unmap(); }

  // length must be a nonzero multiple of 4096.  With create=true the file is
  // (re)created zero-filled at the given length; with create=false the file
  // must exist with exactly that size, or, when length==0, the file's current
  // size is used.
  static Result<SharedRegion> map_file(const std::string& path, u64 length,
                                       bool create, bool writable = true);
  static Result<SharedRegion> map_anon(u64 length);

  u8* data() const { return base_; }
  u64 size() const { return len_; }
  bool valid() const { return base_ != nullptr; }
  const std::string& path() const { return path_; }

  u64 load64_acquire(u64 off) const;
  u64 load64_relaxed(u64 off) const;
  void store64_release(u64 off, u64 v);
  void store64_relaxed(u64 off, u64 v);
  // Returns {success, observed}.  Sequentially consistent.
  std::pair<bool, u64> cas64(u64 off, u64 expected, u64 desired);
  u64 fetch_add64_relaxed(u64 off, u64 delta);

  u32 load32_relaxed(u64 off) const;
  void store32_relaxed(u64 off, u32 v);

  static void write_fence() { std::atomic_thread_fence(std::memory_order_release); }
  static void read_fence() { std::atomic_thread_fence(std::memory_order_acquire); }

 private:
  void unmap();
  void move_from(SharedRegion& o) {
    base_ = o.base_;
    len_ = o.len_;
    path_ = std::move(o.path_);
    o.base_ = nullptr;
    o.len_ = 0;
  }
  u64* word(u64 off) const;

  u8* base_ = nullptr;
  u64 len_ = 0;
  std::string path_;
};

}  // namespace daxfs
