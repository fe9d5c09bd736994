#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "m2fcn/ops.hpp"

namespace m2fcn {

/// Binary H×W mask, 1 = boundary (membrane) pixel, 0 = non-boundary.
class BoundaryLabels {
 public:
  BoundaryLabels() = default;

  BoundaryLabels(std::size_t height, std::size_t width, std::vector<std::uint8_t> mask)
      : height_(height), width_(width), mask_(std::move(mask)) {
    if (height_ == 0 || width_ == 0) throw ShapeError("boundary labels: empty raster");
    if (mask_.size() != height_ * width_) throw ShapeError("boundary labels: mask length does not match H×W");
    for (auto& v : mask_) {
      if (v > 1) throw ShapeError("boundary labels: mask values must be 0 or 1");
      boundary_ += v;
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t pixels() const { return mask_.size(); }
  std::size_t boundary_count() const { return boundary_; }
  std::size_t non_boundary_count() const { return mask_.size() - boundary_; }
  bool is_boundary(std::size_t i) const { return mask_[i] != 0; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  friend bool operator==(const BoundaryLabels&, const BoundaryLabels&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> mask_;
  std::size_t boundary_ = 0;
};

enum class BetaMode {
  // |B̄| / (|B| + |B̄|)
  Fraction,
  // |B̄| / |B| taken literally; (1 - β) goes negative when boundary is rare.
  Ratio,
};

/// Per-image class-balancing weight applied to the boundary term.
inline Real class_balance_beta(const BoundaryLabels& labels, BetaMode mode = BetaMode::Fraction) {
  if (labels.pixels() == 0) throw ShapeError("class_balance_beta: empty raster");
  const auto b = static_cast<Real>(labels.boundary_count());
  const auto nb = static_cast<Real>(labels.non_boundary_count());
  if (labels.boundary_count() == 0) return 0.0;
  if (labels.non_boundary_count() == 0) return 1.0;
  return mode == BetaMode::Fraction ? nb / (b + nb) : nb / b;
}

namespace detail {
// log(1 + e^x) without overflow.
inline Real softplus(Real x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
}  // namespace detail

/// Class-balanced cross-entropy of one 1×H×W logit map:
///   -β Σ_{B} log(1-σ(s)) - (1-β) Σ_{B̄} log σ(s)
/// Boundary pixels are pushed towards σ(s) = 0.
inline Var side_loss(const Var& logits, const BoundaryLabels& labels, Real beta) {
  const Tensor& s = logits.value();
  if (s.rank() != 3 || s.channels() != 1 || s.height() != labels.height() || s.width() != labels.width()) {
    throw ShapeError("side_loss: logits " + shape_string(s.shape()) + " do not match labels " +
                     std::to_string(labels.height()) + "x" + std::to_string(labels.width()));
  }
  Real loss = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (!std::isfinite(s[j])) throw NumericError("side_loss: non-finite logit at pixel " + std::to_string(j));
    // -log(1-σ(s)) = softplus(s); -log σ(s) = softplus(-s)
    loss += labels.is_boundary(j) ? beta * detail::softplus(s[j]) : (1.0 - beta) * detail::softplus(-s[j]);
  }
  return logits.graph().record(Tensor::scalar(loss), {logits},
                               [s, labels, beta](const Tensor& gout, std::vector<Tensor*>& gin) {
                                 Tensor& gs = *gin[0];
                                 for (std::size_t j = 0; j < s.size(); ++j) {
                                   const Real d = labels.is_boundary(j) ? beta * sigmoid_value(s[j])
                                                                        : -(1.0 - beta) * sigmoid_value(-s[j]);
                                   gs[j] += gout[0] * d;
                                 }
                               });
}

/// Σ_n h_n · side_n as a 1×1 convolution over the stacked side maps, so the
/// fusion weights (shape 1×N×1×1) receive gradients.
inline Var fuse(std::span<const Var> sides, const Var& weights) {
  if (sides.empty()) throw ShapeError("fuse: no side outputs");
  const Tensor& h = weights.value();
  if (h.size() != sides.size() || h.rank() != 4) {
    throw ShapeError("fuse: " + std::to_string(sides.size()) + " side outputs but fusion weights " +
                     shape_string(h.shape()));
  }
  Var stacked = sides.size() == 1 ? sides.front() : concat_channels(sides);
  return conv2d(stacked, ConvParams{weights, std::nullopt, 1, 0});
}

}  // namespace m2fcn
