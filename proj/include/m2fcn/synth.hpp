#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <random>
#include <utility>
#include <vector>

#include "m2fcn/augment.hpp"
#include "m2fcn/network.hpp"

namespace m2fcn {

struct SynthParams {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t cells = 8;
  Real distractor_rate = 0.5;  // expected distractor blobs per cell
};

/// A generated sample plus the rendered membrane ink.
struct SynthResult {
  Sample sample;
  std::vector<std::uint8_t> ink;  // 1 where membrane was drawn dark
};

namespace detail {

inline constexpr Real kInkLevel = 0.1;
inline constexpr Real kInteriorLevel = 0.7;
inline constexpr Real kDistractorLevel = 0.25;
inline constexpr Real kInteriorSigma = 0.08;

// Each segment, and each segment with its boundary pixels removed, must be a
// single non-empty 4-connected region.
inline bool regions_connected(const LabelImage& segs, std::size_t cells, const std::vector<std::uint8_t>& excluded) {
  const std::size_t h = segs.height(), w = segs.width();
  std::vector<std::size_t> total(cells + 1, 0), reached(cells + 1, 0);
  std::vector<std::uint8_t> seen(h * w, 0);
  for (std::size_t i = 0; i < h * w; ++i) {
    if (!excluded[i]) ++total[segs[i]];
  }
  std::queue<std::size_t> q;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (excluded[i] || seen[i]) continue;
    const auto id = segs[i];
    if (reached[id] != 0) return false;  // second component for this id
    seen[i] = 1;
    q.push(i);
    while (!q.empty()) {
      const std::size_t p = q.front();
      q.pop();
      ++reached[id];
      const std::size_t y = p / w, x = p % w;
      auto visit = [&](std::size_t n) {
        if (!seen[n] && !excluded[n] && segs[n] == id) {
          seen[n] = 1;
          q.push(n);
        }
      };
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
    }
  }
  for (std::size_t id = 1; id <= cells; ++id) {
    if (total[id] == 0) return false;
  }
  return true;
}

inline Real clipped_normal(std::mt19937_64& rng, Real sigma, Real limit) {
  std::normal_distribution<Real> n(0.0, sigma);
  return std::clamp(n(rng), -limit, limit);
}

inline std::vector<std::pair<Real, Real>> place_seeds(std::mt19937_64& rng, const SynthParams& p) {
  std::uniform_real_distribution<Real> uy(0.0, static_cast<Real>(p.height));
  std::uniform_real_distribution<Real> ux(0.0, static_cast<Real>(p.width));
  Real min_dist = 0.6 * std::sqrt(static_cast<Real>(p.height * p.width) / static_cast<Real>(p.cells));
  std::vector<std::pair<Real, Real>> seeds;
  std::size_t misses = 0;
  while (seeds.size() < p.cells) {
    const Real y = uy(rng), x = ux(rng);
    const bool ok = std::all_of(seeds.begin(), seeds.end(), [&](const auto& s) {
      return std::hypot(s.first - y, s.second - x) >= min_dist;
    });
    if (ok) {
      seeds.emplace_back(y, x);
      misses = 0;
    } else if (++misses == 200) {
      min_dist *= 0.9;
      misses = 0;
    }
  }
  return seeds;
}

inline LabelImage voronoi(const std::vector<std::pair<Real, Real>>& seeds, std::size_t h, std::size_t w) {
  LabelImage segs(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Real py = static_cast<Real>(y) + 0.5, px = static_cast<Real>(x) + 0.5;
      std::size_t best = 0;
      Real best_d = std::numeric_limits<Real>::infinity();
      for (std::size_t k = 0; k < seeds.size(); ++k) {
        const Real dy = seeds[k].first - py, dx = seeds[k].second - px;
        const Real d = dy * dy + dx * dx;
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      segs.at(y, x) = static_cast<std::uint32_t>(best + 1);
    }
  }
  return segs;
}

}  // namespace detail

/// Renders one EM-like image: a Voronoi partition with dark membranes of
/// jittered thickness, textured light interiors and dark elliptical blobs
/// that stay clear of every membrane.
inline SynthResult render_synthetic(std::uint64_t seed, const SynthParams& p) {
  if (p.cells < 2) throw ConfigError("synth: need at least 2 cells");
  if (p.height < 32 || p.width < 32) throw ConfigError("synth: height and width must be >= 32");
  if (p.cells > p.height * p.width / 100) {
    throw ConfigError("synth: " + std::to_string(p.cells) + " cells exceed the budget of one per 100 pixels");
  }
  if (!(p.distractor_rate >= 0)) throw ConfigError("synth: distractor rate must be >= 0");

  const std::size_t h = p.height, w = p.width;
  std::mt19937_64 rng(seed);
  LabelImage segs;
  BoundaryLabels labels;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 64) throw ConfigError("synth: could not build a connected partition");
    segs = detail::voronoi(detail::place_seeds(rng, p), h, w);
    labels = boundary_from_segments(segs);
    const std::vector<std::uint8_t> none(h * w, 0);
    if (detail::regions_connected(segs, p.cells, none) && detail::regions_connected(segs, p.cells, labels.mask())) break;
  }

  // Membrane thickness t per adjacent cell pair. Across each differing
  // 4-neighbour pair (a above/left of b): t=1 inks a, t=2 inks a and b, t=3
  // also inks the pixel beyond a. Odd widths thus always lean up/left.
  std::vector<std::uint8_t> thickness((p.cells + 1) * (p.cells + 1), 0);
  std::uniform_int_distribution<int> pick_t(1, 3);
  auto pair_t = [&](std::uint32_t a, std::uint32_t b) -> std::uint8_t& {
    return thickness[std::min(a, b) * (p.cells + 1) + std::max(a, b)];
  };
  std::vector<std::uint8_t> ink(h * w, 0);
  for (std::size_t i = 0; i < h * w; ++i) {
    const std::size_t y = i / w, x = i % w;
    const auto a = segs[i];
    for (std::size_t step : {w, std::size_t{1}}) {
      if ((step == w && y + 1 >= h) || (step == 1 && x + 1 >= w)) continue;
      const std::size_t n = i + step;
      const auto b = segs[n];
      if (a == b) continue;
      if (pair_t(a, b) == 0) pair_t(a, b) = static_cast<std::uint8_t>(pick_t(rng));
      const int t = pair_t(a, b);
      ink[i] = 1;
      if (t >= 2) ink[n] = 1;
      const bool room = step == w ? y > 0 : x > 0;
      if (t == 3 && room && segs[i - step] == a) ink[i - step] = 1;
    }
  }

  Tensor image({1, h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    image[i] = ink[i] ? detail::kInkLevel + detail::clipped_normal(rng, 0.03, 0.08)
                      : detail::kInteriorLevel + detail::clipped_normal(rng, detail::kInteriorSigma, 0.2);
  }

  // Blobs may only cover pixels at Chebyshev distance >= 2 from any membrane
  // or boundary pixel.
  std::vector<std::uint8_t> blocked(h * w, 0);
  for (std::size_t i = 0; i < h * w; ++i) {
    if (!ink[i] && !labels.is_boundary(i)) continue;
    const std::size_t y = i / w, x = i % w;
    for (std::size_t yy = y > 0 ? y - 1 : 0; yy <= std::min(h - 1, y + 1); ++yy)
      for (std::size_t xx = x > 0 ? x - 1 : 0; xx <= std::min(w - 1, x + 1); ++xx) blocked[yy * w + xx] = 1;
  }
  std::vector<std::vector<std::size_t>> free_pixels(p.cells + 1);
  for (std::size_t i = 0; i < h * w; ++i) {
    if (!blocked[i]) free_pixels[segs[i]].push_back(i);
  }
  const auto whole = static_cast<std::size_t>(std::floor(p.distractor_rate));
  std::bernoulli_distribution extra(p.distractor_rate - static_cast<Real>(whole));
  std::uniform_real_distribution<Real> radius(1.0, 2.5), angle(0.0, 3.141592653589793);
  for (std::size_t id = 1; id <= p.cells; ++id) {
    const std::size_t count = whole + (extra(rng) ? 1 : 0);
    const auto& pool = free_pixels[id];
    for (std::size_t k = 0; k < count && !pool.empty(); ++k) {
      const std::size_t c = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      const Real cy = static_cast<Real>(c / w), cx = static_cast<Real>(c % w);
      const Real ra = radius(rng), rb = radius(rng), th = angle(rng);
      const Real ct = std::cos(th), st = std::sin(th);
      const auto reach = static_cast<long>(std::ceil(std::max(ra, rb)));
      for (long dy = -reach; dy <= reach; ++dy) {
        for (long dx = -reach; dx <= reach; ++dx) {
          const long y = static_cast<long>(cy) + dy, x = static_cast<long>(cx) + dx;
          if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) continue;
          const std::size_t i = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
          if (blocked[i] || segs[i] != id) continue;
          const Real u = (dx * ct + dy * st) / ra, v = (-dx * st + dy * ct) / rb;
          if (u * u + v * v <= 1.0) image[i] = detail::kDistractorLevel + detail::clipped_normal(rng, 0.03, 0.08);
        }
      }
    }
  }
  for (std::size_t i = 0; i < h * w; ++i) image[i] = std::clamp(image[i], 0.0, 1.0);

  SynthResult out;
  out.sample = Sample{std::move(image), std::move(labels), std::move(segs)};
  out.ink = std::move(ink);
  return out;
}

inline Sample synth_generate(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t cells,
                             Real distractor_rate) {
  return render_synthetic(seed, SynthParams{height, width, cells, distractor_rate}).sample;
}

/// `count` samples; sample i is drawn from its own seed stream.
inline std::vector<Sample> synth_corpus(std::uint64_t seed, std::size_t count, const SynthParams& p) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(render_synthetic(detail::splitmix64(seed ^ (0x5eedULL + i)), p).sample);
  return out;
}

}  // namespace m2fcn
