#pragma once

#include <iosfwd>
#include <string>

#include "daxfs/region.hpp"

namespace daxfs {

struct InspectRequest {
  // super | inodes | dir | overlay | pcache | bucket
  std::string selector = "super";
  u64 arg = 0;  // dir ino or bucket index
  bool json = false;
};

// Read-only structure dump.  Returns 0 on success, nonzero when the image is
// malformed (a partial dump with warnings is still printed).
int inspect_image(const SharedRegion& rg, const InspectRequest& req, std::ostream& os);

}  // namespace daxfs
