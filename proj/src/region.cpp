#include "daxfs/region.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <bit>
#include <cassert>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <stdexcept>

namespace daxfs {

const char* errc_name(Errc e) {
  switch (e) {
    case Errc::ok: return "ok";
    case Errc::not_found: return "not-found";
    case Errc::exists: return "exists";
    case Errc::read_only: return "read-only";
    case Errc::no_space: return "no-space";
    case Errc::bad_format: return "bad-format";
    case Errc::busy: return "busy";
    case Errc::io_error: return "io-error";
    case Errc::invalid: return "invalid";
    case Errc::not_dir: return "not-a-directory";
    case Errc::is_dir: return "is-a-directory";
    case Errc::not_empty: return "not-empty";
    case Errc::loop: return "symlink-loop";
  }
  return "?";
}

static_assert(std::endian::native == std::endian::little,
              "big-endian hosts need byte-swapping at this boundary");

namespace {

u64 g_delay_override = ~0ull;  // ~0 = use the environment

u64 atomic_delay_ns() {
  if (g_delay_override != ~0ull) return g_delay_override;
  static u64 delay = [] {
    const char* s = std::getenv("DAXFS_ATOMIC_DELAY_NS");
    return s ? strtoull(s, nullptr, 10) : 0ull;
  }();
  return delay;
}

void inject_delay() {
  u64 ns = atomic_delay_ns();
  if (ns == 0) return;
  auto until = std::chrono::steady_clock::now() + std::chrono::nanoseconds(ns);
  while (std::chrono::steady_clock::now() < until) {
  }
}

}  // namespace

void set_atomic_delay_ns(u64 ns) { g_delay_override = ns; }

Result<SharedRegion> SharedRegion::map_file(const std::string& path, u64 length,
                                            bool create, bool writable) {
  if (create && (length == 0 || length % kPageSize != 0)) return Errc::invalid;
  int flags = writable ? O_RDWR : O_RDONLY;
  if (create) flags |= O_CREAT | O_TRUNC;
  int fd = ::open(path.c_str(), flags, 0644);
  if (fd < 0) return Errc::io_error;
  if (create) {
    if (ftruncate(fd, (off_t)length) != 0) {
      ::close(fd);
      return Errc::io_error;
    }
  } else {
    struct stat st{};
    if (fstat(fd, &st) != 0) {
      ::close(fd);
      return Errc::io_error;
    }
    if (length == 0) length = (u64)st.st_size;
    if ((u64)st.st_size != length) {
      ::close(fd);
      return Errc::invalid;
    }
    if (length == 0 || length % kPageSize != 0) {
      ::close(fd);
      return Errc::invalid;
    }
  }
  int prot = PROT_READ | (writable ? PROT_WRITE : 0);
  void* p = mmap(nullptr, length, prot, MAP_SHARED, fd, 0);
  ::close(fd);
  if (p == MAP_FAILED) return Errc::io_error;
  SharedRegion r;
  r.base_ = static_cast<u8*>(p);
  r.len_ = length;
  r.path_ = path;
  return r;
}

Result<SharedRegion> SharedRegion::map_anon(u64 length) {
  if (length == 0 || length % kPageSize != 0) return Errc::invalid;
  void* p = mmap(nullptr, length, PROT_READ | PROT_WRITE,
                 MAP_SHARED | MAP_ANONYMOUS, -1, 0);
  if (p == MAP_FAILED) return Errc::io_error;
  SharedRegion r;
  r.base_ = static_cast<u8*>(p);
  r.len_ = length;
  return r;
}

void SharedRegion::unmap() {
  if (base_) munmap(base_, len_);
  base_ = nullptr;
  len_ = 0;
}

u64* SharedRegion::word(u64 off) const {
  if (off % 8 != 0 || off + 8 > len_)
    throw std::invalid_argument("misaligned or out-of-bounds atomic access");
  return reinterpret_cast<u64*>(base_ + off);
}

u64 SharedRegion::load64_acquire(u64 off) const {
  return std::atomic_ref<u64>(*word(off)).load(std::memory_order_acquire);
}

u64 SharedRegion::load64_relaxed(u64 off) const {
  return std::atomic_ref<u64>(*word(off)).load(std::memory_order_relaxed);
}

void SharedRegion::store64_release(u64 off, u64 v) {
  std::atomic_ref<u64>(*word(off)).store(v, std::memory_order_release);
}

void SharedRegion::store64_relaxed(u64 off, u64 v) {
  std::atomic_ref<u64>(*word(off)).store(v, std::memory_order_relaxed);
}

std::pair<bool, u64> SharedRegion::cas64(u64 off, u64 expected, u64 desired) {
  inject_delay();
  u64 exp = expected;
  bool won = std::atomic_ref<u64>(*word(off)).compare_exchange_strong(
      exp, desired, std::memory_order_seq_cst);
  return {won, won ? expected : exp};
}

u64 SharedRegion::fetch_add64_relaxed(u64 off, u64 delta) {
  return std::atomic_ref<u64>(*word(off)).fetch_add(delta, std::memory_order_relaxed);
}

u32 SharedRegion::load32_relaxed(u64 off) const {
  if (off % 4 != 0 || off + 4 > len_)
    throw std::invalid_argument("misaligned or out-of-bounds atomic access");
  return std::atomic_ref<u32>(*reinterpret_cast<u32*>(base_ + off))
      .load(std::memory_order_relaxed);
}

void SharedRegion::store32_relaxed(u64 off, u32 v) {
  if (off % 4 != 0 || off + 4 > len_)
    throw std::invalid_argument("misaligned or out-of-bounds atomic access");
  std::atomic_ref<u32>(*reinterpret_cast<u32*>(base_ + off))
      .store(v, std::memory_order_relaxed);
}

}  // namespace daxfs
