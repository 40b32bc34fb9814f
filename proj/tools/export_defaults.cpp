// Writes the bundled device profiles, capability profile, scenarios and
// manifests into a data directory (default: ./data).
#include <filesystem>
#include <fstream>
#include <iostream>

#include "viewsched/cli.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path root = argc > 1 ? argv[1] : "data";
  for (const auto& [rel, content] : viewsched::default_data_files()) {
    const std::filesystem::path path = root / rel;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) {
      std::cerr << "cannot write " << path << "\n";
      return 2;
    }
    std::cout << path.string() << "\n";
  }
  return 0;
}
