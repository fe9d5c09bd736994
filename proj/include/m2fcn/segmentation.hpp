#pragma once

#include <cstdint>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include "m2fcn/label_image.hpp"

namespace m2fcn {

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

inline void require_probability_map(const Tensor& prob, const char* what) {
  if (prob.rank() != 3 || prob.channels() != 1) {
    throw ShapeError(std::string(what) + ": expected 1×H×W map, got " + shape_string(prob.shape()));
  }
}

inline void require_threshold(Real threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ConfigError("segmentation threshold " + std::to_string(threshold) + " outside [0,1]");
  }
}

}  // namespace detail

/// 4-connected components of {prob >= threshold}, ids 1..K in row-major
/// order of first pixel; other pixels get 0.
inline LabelImage label_components(const Tensor& prob, Real threshold) {
  detail::require_probability_map(prob, "label_components");
  detail::require_threshold(threshold);
  const std::size_t h = prob.height(), w = prob.width();
  detail::UnionFind uf(h * w);
  auto fg = [&](std::size_t i) { return prob[i] >= threshold; };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      if (!fg(i)) continue;
      if (x > 0 && fg(i - 1)) uf.unite(i, i - 1);
      if (y > 0 && fg(i - w)) uf.unite(i, i - w);
    }
  }
  LabelImage out(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    if (fg(i)) out[i] = static_cast<std::uint32_t>(uf.find(i) + 1);
  }
  out.canonicalize();
  return out;
}

/// Threshold components, then flood the remaining pixels from their labelled
/// neighbours in decreasing probability order (row-major among equals).
inline LabelImage segment_from_boundary(const Tensor& prob, Real threshold) {
  LabelImage seg = label_components(prob, threshold);
  const std::size_t h = seg.height(), w = seg.width();

  // (prob, -pixel): highest prob first, then row-major.
  using Entry = std::pair<Real, std::int64_t>;
  std::priority_queue<Entry> heap;
  std::vector<std::uint8_t> queued(h * w, 0);
  auto push = [&](std::size_t i) {
    queued[i] = 1;
    heap.emplace(prob[i], -static_cast<std::int64_t>(i));
  };
  auto labelled_neighbour = [&](std::size_t i) -> std::uint32_t {
    const std::size_t y = i / w, x = i % w;
    if (y > 0 && seg[i - w]) return seg[i - w];
    if (x > 0 && seg[i - 1]) return seg[i - 1];
    if (x + 1 < w && seg[i + 1]) return seg[i + 1];
    if (y + 1 < h && seg[i + w]) return seg[i + w];
    return 0;
  };
  for (std::size_t i = 0; i < h * w; ++i) {
    if (seg[i] == 0 && labelled_neighbour(i) != 0) push(i);
  }
  while (!heap.empty()) {
    const auto i = static_cast<std::size_t>(-heap.top().second);
    heap.pop();
    seg[i] = labelled_neighbour(i);
    const std::size_t y = i / w, x = i % w;
    auto visit = [&](std::size_t n) {
      if (seg[n] == 0 && !queued[n]) push(n);
    };
    if (y > 0) visit(i - w);
    if (x > 0) visit(i - 1);
    if (x + 1 < w) visit(i + 1);
    if (y + 1 < h) visit(i + w);
  }
  return seg;
}

}  // namespace m2fcn
