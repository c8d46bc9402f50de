#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <utility>

namespace daxfs {

using u8 = uint8_t;
using u16 = uint16_t;
using u32 = uint32_t;
using u64 = uint64_t;
using i64 = int64_t;

constexpr u64 kPageSize = 4096;

constexpr u64 align_up(u64 v, u64 a) { return (v + a - 1) & ~(a - 1); }
constexpr u64 page_align(u64 v) { return align_up(v, kPageSize); }

enum class Errc {
  ok = 0,
  not_found,
  exists,
  read_only,
  no_space,
  bad_format,
  busy,
  io_error,
  invalid,
  not_dir,
  is_dir,
  not_empty,
  loop,
};

const char* errc_name(Errc e);

template <typename T>
struct Result {
  T value{};
  Errc err = Errc::ok;

  Result() = default;
  Result(T v) : value(std::move(v)) {}
  Result(Errc e) : err(e) {}
  bool ok() const { return err == Errc::ok; }
  explicit operator bool() const { return ok(); }
  const T& operator*() const { return value; }
  T& operator*() { return value; }
  const T* operator->() const { return &value; }
  T* operator->() { return &value; }
};

struct Unit {};
using Status = Result<Unit>;

inline Status ok_status() { return Status(Unit{}); }

// FNV-1a over raw bytes, 64-bit.
inline u64 fnv1a64(const void* data, size_t len, u64 h = 14695981039346656037ull) {
  const u8* p = static_cast<const u8*>(data);
  for (size_t i = 0; i < len; i++) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

// 63-bit variant used for dirent keys and pcache slot hashing.
inline u64 fnv1a63(const void* data, size_t len, u64 seed = 14695981039346656037ull) {
  return fnv1a64(data, len, seed) & 0x7FFFFFFFFFFFFFFFull;
}

}  // namespace daxfs
