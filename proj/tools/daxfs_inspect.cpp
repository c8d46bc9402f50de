// Structure dump: superblock, inode table, dirents, overlay and pcache state.

#include <iostream>

#include <CLI11.hpp>

#include "daxfs/inspect.hpp"

using namespace daxfs;

int main(int argc, char** argv) {
  CLI::App app{"inspect a DAXFS image (read-only)"};
  std::string image;
  InspectRequest req;
  app.add_option("--image", image, "image path")->required();
  app.add_option("selector", req.selector,
                 "super | inodes | dir | overlay | pcache | bucket");
  app.add_option("arg", req.arg, "directory ino (dir) or bucket index (bucket)");
  app.add_flag("--json", req.json, "JSON output");
  CLI11_PARSE(app, argc, argv);

  auto rg = SharedRegion::map_file(image, 0, false, false);
  if (!rg.ok()) {
    std::cerr << "inspect: cannot map " << image << "\n";
    return 4;
  }
  return inspect_image(*rg, req, std::cout);
}
