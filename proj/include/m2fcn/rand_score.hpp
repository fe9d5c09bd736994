#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <map>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "m2fcn/segmentation.hpp"

namespace m2fcn {

struct RandScores {
  Real merge = 0;
  Real split = 0;
  Real fscore = 0;
};

/// Harmonic mean of merge and split.
inline Real rand_fscore(Real merge, Real split) {
  if (merge + split <= 0) return 0;
  return 2 * merge * split / (merge + split);
}

/// Overlap counts n_ij between proposal segment i and ground-truth segment j.
/// Pixels with id 0 on either side are not counted.
class Contingency {
 public:
  using Key = std::pair<std::uint32_t, std::uint32_t>;

  void add(std::uint32_t proposal, std::uint32_t truth, std::uint64_t count = 1) { counts_[{proposal, truth}] += count; }

  /// Adds `other`'s counts. Nonzero offsets shift its ids so that segments of
  /// different images stay distinct when pooling a stack.
  void merge_from(const Contingency& other, std::uint32_t proposal_offset = 0, std::uint32_t truth_offset = 0) {
    for (const auto& [k, n] : other.counts_) counts_[{k.first + proposal_offset, k.second + truth_offset}] += n;
  }

  std::uint32_t max_proposal_id() const {
    std::uint32_t m = 0;
    for (const auto& [k, n] : counts_) m = std::max(m, k.first);
    return m;
  }
  std::uint32_t max_truth_id() const {
    std::uint32_t m = 0;
    for (const auto& [k, n] : counts_) m = std::max(m, k.second);
    return m;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& [k, n] : counts_) t += n;
    return t;
  }

  const std::map<Key, std::uint64_t>& counts() const { return counts_; }
  std::uint64_t at(std::uint32_t proposal, std::uint32_t truth) const {
    auto it = counts_.find({proposal, truth});
    return it == counts_.end() ? 0 : it->second;
  }

 private:
  std::map<Key, std::uint64_t> counts_;
};

inline Contingency contingency(const LabelImage& proposal, const LabelImage& truth) {
  if (proposal.height() != truth.height() || proposal.width() != truth.width()) {
    throw ShapeError("contingency: proposal and ground truth differ in size");
  }
  Contingency c;
  for (std::size_t i = 0; i < proposal.size(); ++i) {
    if (proposal[i] != 0 && truth[i] != 0) c.add(proposal[i], truth[i]);
  }
  if (c.total() == 0) throw ShapeError("contingency: every pixel is excluded");
  return c;
}

/// merge = Σn_ij² / Σ_i(Σ_j n_ij)², split = Σn_ij² / Σ_j(Σ_i n_ij)².
inline RandScores rand_scores(const Contingency& table) {
  std::map<std::uint32_t, std::uint64_t> rows, cols;
  long double joint = 0;
  for (const auto& [k, n] : table.counts()) {
    rows[k.first] += n;
    cols[k.second] += n;
    joint += static_cast<long double>(n) * n;
  }
  if (joint == 0) throw ShapeError("rand_scores: empty contingency table");
  long double row_sq = 0, col_sq = 0;
  for (const auto& [i, n] : rows) row_sq += static_cast<long double>(n) * n;
  for (const auto& [j, n] : cols) col_sq += static_cast<long double>(n) * n;
  RandScores s;
  s.merge = static_cast<Real>(joint / row_sq);
  s.split = static_cast<Real>(joint / col_sq);
  s.fscore = rand_fscore(s.merge, s.split);
  return s;
}

struct PrPoint {
  Real threshold = 0;
  RandScores scores;
};

struct SweepResult {
  RandScores best;
  Real best_threshold = 0;
  std::vector<PrPoint> curve;  // in threshold order
};

/// `count` evenly spaced thresholds covering [lo, hi].
inline std::vector<Real> threshold_grid(std::size_t count = 33, Real lo = 0.02, Real hi = 0.98) {
  if (count == 0) throw ConfigError("threshold grid needs at least one threshold");
  if (count == 1) return {lo};
  std::vector<Real> out(count);
  for (std::size_t k = 0; k < count; ++k) out[k] = lo + (hi - lo) * static_cast<Real>(k) / static_cast<Real>(count - 1);
  return out;
}

/// Rand scores of segmentations pooled over every image at one threshold, each
/// image's segments kept distinct from every other image's. A
/// map with no pixel at or above the threshold counts as a single segment.
inline RandScores pooled_scores(std::span<const Tensor> probs, std::span<const LabelImage> truths, Real threshold) {
  Contingency pooled;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    LabelImage seg = segment_from_boundary(probs[k], threshold);
    if (seg.segment_count() == 0) seg = LabelImage(seg.height(), seg.width(), 1u);
    const std::uint32_t po = pooled.max_proposal_id(), to = pooled.max_truth_id();
    pooled.merge_from(contingency(seg, truths[k]), po, to);
  }
  return rand_scores(pooled);
}

/// Scores every threshold and keeps the first one with the highest F-score.
inline SweepResult best_fscore_sweep(std::span<const Tensor> probs, std::span<const LabelImage> truths,
                                     std::span<const Real> thresholds, std::size_t threads = 1) {
  if (probs.size() != truths.size()) throw ShapeError("best_fscore_sweep: map and ground-truth counts differ");
  if (probs.empty()) throw ShapeError("best_fscore_sweep: no images");
  if (thresholds.empty()) throw ConfigError("best_fscore_sweep: no thresholds");

  SweepResult out;
  out.curve.resize(thresholds.size());
  auto run = [&](std::size_t first, std::size_t step) {
    for (std::size_t t = first; t < thresholds.size(); t += step) {
      out.curve[t] = PrPoint{thresholds[t], pooled_scores(probs, truths, thresholds[t])};
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, thresholds.size()));
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) {
      pool.emplace_back([&, k] {
        try {
          run(k, threads);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::size_t best = 0;
  for (std::size_t t = 1; t < out.curve.size(); ++t) {
    if (out.curve[t].scores.fscore > out.curve[best].scores.fscore) best = t;
  }
  out.best = out.curve[best].scores;
  out.best_threshold = out.curve[best].threshold;
  return out;
}

}  // namespace m2fcn
