#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "m2fcn/objective.hpp"

namespace m2fcn {

/// H×W raster of segment ids. Id 0 marks boundary/ignored pixels.
class LabelImage {
 public:
  LabelImage() = default;
  LabelImage(std::size_t height, std::size_t width, std::uint32_t fill = 0)
      : height_(height), width_(width), ids_(height * width, fill) {}
  LabelImage(std::size_t height, std::size_t width, std::vector<std::uint32_t> ids)
      : height_(height), width_(width), ids_(std::move(ids)) {
    if (ids_.size() != height_ * width_) throw ShapeError("label image: id count does not match H×W");
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return ids_.size(); }
  std::uint32_t& operator[](std::size_t i) { return ids_[i]; }
  std::uint32_t operator[](std::size_t i) const { return ids_[i]; }
  std::uint32_t& at(std::size_t y, std::size_t x) { return ids_[y * width_ + x]; }
  std::uint32_t at(std::size_t y, std::size_t x) const { return ids_[y * width_ + x]; }
  const std::vector<std::uint32_t>& ids() const { return ids_; }

  /// Number of distinct positive ids.
  std::size_t segment_count() const {
    std::unordered_map<std::uint32_t, bool> seen;
    for (auto id : ids_) {
      if (id != 0) seen[id] = true;
    }
    return seen.size();
  }

  /// Renumbers positive ids to 1..K in row-major order of first appearance.
  void canonicalize() {
    std::unordered_map<std::uint32_t, std::uint32_t> remap;
    for (auto& id : ids_) {
      if (id == 0) continue;
      auto [it, inserted] = remap.try_emplace(id, static_cast<std::uint32_t>(remap.size() + 1));
      id = it->second;
    }
  }

  friend bool operator==(const LabelImage&, const LabelImage&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint32_t> ids_;
};

/// Boundary pixels are those with a 4-neighbour of a different id, so both
/// sides of every segment border are marked.
inline BoundaryLabels boundary_from_segments(const LabelImage& segs) {
  const std::size_t h = segs.height(), w = segs.width();
  std::vector<std::uint8_t> mask(h * w, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto id = segs.at(y, x);
      const bool edge = (y > 0 && segs.at(y - 1, x) != id) || (y + 1 < h && segs.at(y + 1, x) != id) ||
                        (x > 0 && segs.at(y, x - 1) != id) || (x + 1 < w && segs.at(y, x + 1) != id);
      mask[y * w + x] = edge ? 1 : 0;
    }
  }
  return BoundaryLabels(h, w, std::move(mask));
}

/// Segments with their boundary pixels set to 0, the form scored by the Rand
/// metrics.
inline LabelImage interior_ground_truth(const LabelImage& segs) {
  const BoundaryLabels b = boundary_from_segments(segs);
  LabelImage out = segs;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (b.is_boundary(i)) out[i] = 0;
  }
  return out;
}

/// Ideal probability map for a segmentation: 0 on boundary pixels, 1 elsewhere.
inline Tensor ideal_boundary_map(const BoundaryLabels& labels) {
  Tensor t({1, labels.height(), labels.width()}, 1.0);
  for (std::size_t i = 0; i < labels.pixels(); ++i) {
    if (labels.is_boundary(i)) t[i] = 0.0;
  }
  return t;
}

}  // namespace m2fcn
