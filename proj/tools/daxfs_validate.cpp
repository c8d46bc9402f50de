// Image validator: single forward pass, never crashes on corrupt input.

#include <iostream>

#include <CLI11.hpp>

#include "daxfs/format.hpp"

using namespace daxfs;

int main(int argc, char** argv) {
  CLI::App app{"validate a DAXFS image"};
  std::string image;
  bool json = false;
  app.add_option("--image", image, "image path")->required();
  app.add_flag("--json", json, "JSON output");
  CLI11_PARSE(app, argc, argv);

  auto rg = SharedRegion::map_file(image, 0, false, false);
  if (!rg.ok()) {
    std::cerr << "validate: cannot map " << image << "\n";
    return 4;
  }
  auto rep = validate_image(*rg);
  if (json) {
    std::cout << "{\"ok\": " << (rep.ok ? "true" : "false") << ", \"findings\": [";
    for (size_t i = 0; i < rep.findings.size(); i++) {
      if (i) std::cout << ", ";
      std::cout << '"';
      for (char c : rep.findings[i])
        if (c == '"' || c == '\\')
          std::cout << '\\' << c;
        else
          std::cout << c;
      std::cout << '"';
    }
    std::cout << "]}\n";
  } else {
    std::cout << "ok: " << (rep.ok ? "true" : "false") << "\n";
    for (const auto& f : rep.findings) std::cout << "finding: " << f << "\n";
  }
  return rep.ok ? 0 : 4;
}
