#pragma once

#include <string>
#include <vector>

#include "daxfs/format.hpp"

namespace daxfs {

struct BuildManifest {
  std::string source_dir;  // empty for empty-mode images
  MountMode mode = MountMode::static_;
  u64 bucket_count = 65536;
  u64 pool_len = 64ull << 20;
  u64 slot_count = 0;
  std::vector<std::string> backing_paths;  // split mode: file data goes here
  bool keep_mtime = false;
};

// Builds a DAXFS image from a source tree.  Inode numbers are assigned
// depth-first from the root; directory entries are emitted in sorted name
// order, so the same tree always produces a bit-identical image (fixed
// timestamps unless keep_mtime).
Status mkdaxfs(const BuildManifest& m, const std::string& out_path);

}  // namespace daxfs
