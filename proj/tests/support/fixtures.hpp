#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fixtures {

inline std::filesystem::path dir() { return MEDFUZZ_FIXTURE_DIR; }
inline std::filesystem::path golden_dir() { return MEDFUZZ_GOLDEN_DIR; }
inline std::filesystem::path template_dir() { return MEDFUZZ_TEMPLATE_DIR; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json json_file(const std::string& name) { return nlohmann::json::parse(slurp(dir() / name)); }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("medfuzz-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
