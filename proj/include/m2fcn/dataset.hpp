#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "m2fcn/augment.hpp"
#include "m2fcn/raster_io.hpp"

namespace m2fcn {

enum class Split { Train, Test };

struct DatasetEntry {
  std::string stem;
  Split split = Split::Train;
  Sample sample;
};

/// On disk: images/<stem>.pgm (8-bit), labels/<stem>.pgm (8-bit, 255 =
/// boundary), optional segs/<stem>.pgm (16-bit ids) and manifest.txt with one
/// "<stem> train|test" line per sample.
struct Dataset {
  std::vector<DatasetEntry> entries;

  std::vector<Sample> samples(Split split) const {
    std::vector<Sample> out;
    for (const auto& e : entries) {
      if (e.split == split) out.push_back(e.sample);
    }
    return out;
  }
  std::vector<std::string> stems(Split split) const {
    std::vector<std::string> out;
    for (const auto& e : entries) {
      if (e.split == split) out.push_back(e.stem);
    }
    return out;
  }
};

inline std::string numbered_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

inline void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  std::string manifest;
  for (const auto& e : data.entries) {
    save_image(dir / "images" / (e.stem + ".pgm"), e.sample.image, 255);
    save_mask(dir / "labels" / (e.stem + ".pgm"), e.sample.labels);
    if (e.sample.segments) {
      fs::create_directories(dir / "segs");
      save_labels(dir / "segs" / (e.stem + ".pgm"), *e.sample.segments);
    }
    manifest += e.stem + (e.split == Split::Train ? " train\n" : " test\n");
  }
  write_file_atomic(dir / "manifest.txt", manifest);
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest = dir / "manifest.txt";
  if (!fs::exists(manifest)) throw IoError("dataset: missing " + manifest.string());
  Dataset data;
  std::size_t line_no = 0;
  for (const auto& line : kv::split(read_file(manifest), '\n')) {
    ++line_no;
    if (line.empty()) continue;
    const auto parts = kv::split(line, ' ');
    if (parts.size() != 2 || (parts[1] != "train" && parts[1] != "test")) {
      throw IoError("dataset manifest line " + std::to_string(line_no) + ": expected '<stem> train|test'");
    }
    DatasetEntry e;
    e.stem = parts[0];
    e.split = parts[1] == "train" ? Split::Train : Split::Test;
    e.sample.image = load_image(dir / "images" / (e.stem + ".pgm"));
    e.sample.labels = load_mask(dir / "labels" / (e.stem + ".pgm"));
    const fs::path seg = dir / "segs" / (e.stem + ".pgm");
    if (fs::exists(seg)) e.sample.segments = load_labels(seg);
    if (e.sample.labels.height() != e.sample.image.height() || e.sample.labels.width() != e.sample.image.width() ||
        (e.sample.segments && (e.sample.segments->height() != e.sample.image.height() ||
                               e.sample.segments->width() != e.sample.image.width()))) {
      throw ShapeError("dataset: rasters of '" + e.stem + "' differ in size");
    }
    data.entries.push_back(std::move(e));
  }
  return data;
}

}  // namespace m2fcn
