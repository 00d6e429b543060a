#pragma once

#include <fstream>
#include <sstream>
#include <string>

namespace schemamap::testing {

inline std::string source_path(const std::string& relative) {
  return std::string(SCHEMAMAP_SOURCE_DIR) + "/" + relative;
}

inline std::string snapshot_path() {
  return source_path("fixtures/vocab/schemaorg-current-https-12.0.jsonld");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace schemamap::testing
