// Image builder: packs a source tree into a DAXFS image.

#include <iostream>

#include <CLI11.hpp>

#include "daxfs/format.hpp"
#include "daxfs/mkfs.hpp"

using namespace daxfs;

int main(int argc, char** argv) {
  CLI::App app{"build a DAXFS image from a directory tree"};
  std::string source, image, mode = "static";
  BuildManifest m;
  bool do_validate = false;
  app.add_option("source", source, "source directory (omit for --mode empty)");
  app.add_option("--image", image, "output image path")->required();
  app.add_option("--mode", mode, "static | split | empty")
      ->check(CLI::IsMember({"static", "split", "empty"}));
  app.add_option("--buckets", m.bucket_count, "overlay hash bucket count");
  app.add_option("--pool", m.pool_len, "overlay pool bytes");
  app.add_option("--slots", m.slot_count, "page cache slot count");
  app.add_option("--backing", m.backing_paths, "backing file path (split mode)");
  app.add_flag("--validate", do_validate, "validate the image after building");
  app.add_flag("--keep-mtime", m.keep_mtime, "preserve source mtimes");
  CLI11_PARSE(app, argc, argv);

  m.source_dir = source;
  m.mode = mode == "split"   ? MountMode::split
           : mode == "empty" ? MountMode::empty
                             : MountMode::static_;
  if (m.mode == MountMode::static_) {
    m.bucket_count = 0;
    m.pool_len = 0;
    m.slot_count = 0;
  } else if (m.mode == MountMode::split && m.slot_count == 0) {
    m.slot_count = 1024;
  }

  auto st = mkdaxfs(m, image);
  if (!st.ok()) {
    std::cerr << "mkdaxfs: " << errc_name(st.err) << "\n";
    return st.err == Errc::bad_format ? 4 : st.err == Errc::no_space ? 3 : 5;
  }
  if (do_validate) {
    auto rg = SharedRegion::map_file(image, 0, false, false);
    if (!rg.ok()) {
      std::cerr << "mkdaxfs: cannot re-open image\n";
      return 4;
    }
    auto rep = validate_image(*rg);
    for (const auto& f : rep.findings) std::cerr << "finding: " << f << "\n";
    if (!rep.ok) return 4;
  }
  return 0;
}
