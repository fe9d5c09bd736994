#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "m2fcn/error.hpp"

namespace m2fcn {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Writes `<path>.partial` first and renames it into place once complete, so
/// a failed write never leaves a truncated file under the final name.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path partial = path;
  partial += ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + partial.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + partial.string() + "'");
  }
  std::filesystem::rename(partial, path);
}

}  // namespace m2fcn
