#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "m2fcn/label_image.hpp"

namespace m2fcn {

/// One training example: a 1×H×W image in [0,1], its boundary labels and,
/// when known, the segmentation the labels were derived from.
struct Sample {
  Tensor image;
  BoundaryLabels labels;
  std::optional<LabelImage> segments;
};

enum class Flip { None, UpDown, LeftRight };

struct Augmentation {
  int quarter_turns = 0;  // counter-clockwise
  Flip flip = Flip::None;
  Real scale = 1.0;

  bool is_isometry() const { return scale == 1.0; }
  std::string name() const {
    static const char* flips[] = {"none", "ud", "lr"};
    char buf[64];
    std::snprintf(buf, sizeof buf, "rot%d_%s_s%.1f", quarter_turns * 90, flips[static_cast<int>(flip)], scale);
    return buf;
  }
};

/// 4 rotations × 3 flips × 3 scales, rotation outermost, scale innermost.
inline std::vector<Augmentation> augmentation_set() {
  std::vector<Augmentation> out;
  for (int r = 0; r < 4; ++r) {
    for (Flip f : {Flip::UpDown, Flip::LeftRight, Flip::None}) {
      for (Real s : {0.8, 1.0, 1.2}) out.push_back({r, f, s});
    }
  }
  return out;
}

namespace detail {

template <typename T>
struct Grid {
  std::size_t h = 0, w = 0;
  std::vector<T> v;
  T at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

template <typename T>
Grid<T> rot90(const Grid<T>& g) {
  // CCW: new(y, x) = old(x, w-1-y), new extents w×h
  Grid<T> out{g.w, g.h, std::vector<T>(g.v.size())};
  for (std::size_t y = 0; y < out.h; ++y)
    for (std::size_t x = 0; x < out.w; ++x) out.v[y * out.w + x] = g.at(x, g.w - 1 - y);
  return out;
}

template <typename T>
Grid<T> flip(const Grid<T>& g, Flip f) {
  if (f == Flip::None) return g;
  Grid<T> out{g.h, g.w, std::vector<T>(g.v.size())};
  for (std::size_t y = 0; y < g.h; ++y)
    for (std::size_t x = 0; x < g.w; ++x)
      out.v[y * g.w + x] = f == Flip::UpDown ? g.at(g.h - 1 - y, x) : g.at(y, g.w - 1 - x);
  return out;
}

inline std::size_t scaled_extent(std::size_t n, Real s) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<Real>(n) * s)));
}

// Pixel-centre aligned nearest neighbour.
template <typename T>
Grid<T> resize_nearest(const Grid<T>& g, std::size_t nh, std::size_t nw) {
  Grid<T> out{nh, nw, std::vector<T>(nh * nw)};
  for (std::size_t y = 0; y < nh; ++y) {
    const auto sy = std::min(g.h - 1, static_cast<std::size_t>((static_cast<Real>(y) + 0.5) * g.h / nh));
    for (std::size_t x = 0; x < nw; ++x) {
      const auto sx = std::min(g.w - 1, static_cast<std::size_t>((static_cast<Real>(x) + 0.5) * g.w / nw));
      out.v[y * nw + x] = g.at(sy, sx);
    }
  }
  return out;
}

// Pixel-centre aligned bilinear with edge clamping.
inline Grid<Real> resize_bilinear(const Grid<Real>& g, std::size_t nh, std::size_t nw) {
  Grid<Real> out{nh, nw, std::vector<Real>(nh * nw)};
  auto axis = [](std::size_t o, std::size_t n_in, std::size_t n_out) {
    Real src = (static_cast<Real>(o) + 0.5) * static_cast<Real>(n_in) / static_cast<Real>(n_out) - 0.5;
    src = std::clamp(src, 0.0, static_cast<Real>(n_in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, n_in - 1);
    return std::tuple{lo, hi, src - static_cast<Real>(lo)};
  };
  for (std::size_t y = 0; y < nh; ++y) {
    const auto [y0, y1, fy] = axis(y, g.h, nh);
    for (std::size_t x = 0; x < nw; ++x) {
      const auto [x0, x1, fx] = axis(x, g.w, nw);
      const Real top = g.at(y0, x0) * (1 - fx) + g.at(y0, x1) * fx;
      const Real bottom = g.at(y1, x0) * (1 - fx) + g.at(y1, x1) * fx;
      out.v[y * nw + x] = top * (1 - fy) + bottom * fy;
    }
  }
  return out;
}

template <typename T>
Grid<T> isometry(Grid<T> g, const Augmentation& a) {
  for (int r = 0; r < a.quarter_turns; ++r) g = rot90(g);
  return flip(g, a.flip);
}

}  // namespace detail

/// Applies the same rotation/flip/scale to image and labels. Images scale
/// bilinearly; segments (or the bare mask) scale by nearest neighbour and the
/// boundary mask is re-derived from scaled segments.
inline Sample apply_augmentation(const Sample& s, const Augmentation& a) {
  const std::size_t h = s.image.height(), w = s.image.width();
  auto img = detail::isometry(detail::Grid<Real>{h, w, s.image.storage()}, a);
  const std::size_t nh = a.is_isometry() ? img.h : detail::scaled_extent(img.h, a.scale);
  const std::size_t nw = a.is_isometry() ? img.w : detail::scaled_extent(img.w, a.scale);
  if (!a.is_isometry()) img = detail::resize_bilinear(img, nh, nw);

  Sample out;
  out.image = Tensor({1, nh, nw}, std::move(img.v));
  if (s.segments) {
    auto seg = detail::isometry(detail::Grid<std::uint32_t>{h, w, s.segments->ids()}, a);
    if (!a.is_isometry()) seg = detail::resize_nearest(seg, nh, nw);
    out.segments = LabelImage(nh, nw, std::move(seg.v));
    out.labels = boundary_from_segments(*out.segments);
  } else {
    auto mask = detail::isometry(detail::Grid<std::uint8_t>{h, w, s.labels.mask()}, a);
    if (!a.is_isometry()) mask = detail::resize_nearest(mask, nh, nw);
    out.labels = BoundaryLabels(nh, nw, std::move(mask.v));
  }
  return out;
}

/// The 36 augmented variants of `s`, in augmentation_set() order.
inline std::vector<Sample> augment36(const Sample& s) {
  std::vector<Sample> out;
  out.reserve(36);
  for (const auto& a : augmentation_set()) out.push_back(apply_augmentation(s, a));
  return out;
}

}  // namespace m2fcn
