#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "m2fcn/autograd.hpp"

namespace m2fcn {

namespace detail {

inline void require_chw(const Tensor& t, const char* op) {
  if (t.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected C×H×W input, got " + shape_string(t.shape()));
  }
}

inline std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) {
    h ^= (v >> (8 * b)) & 0xffU;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

// Half-open range of output columns whose tap (out*stride + k - pad) lands in [0, extent).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t in_extent,
                                                       std::size_t k, std::size_t stride,
                                                       std::size_t pad) {
  const long long lo_num = static_cast<long long>(pad) - static_cast<long long>(k);
  long long lo = lo_num <= 0 ? 0 : (lo_num + static_cast<long long>(stride) - 1) / static_cast<long long>(stride);
  // largest o with o*stride + k - pad <= in_extent - 1
  const long long hi_num = static_cast<long long>(in_extent) - 1 + static_cast<long long>(pad) - static_cast<long long>(k);
  long long hi = hi_num < 0 ? -1 : hi_num / static_cast<long long>(stride);
  hi = std::min<long long>(hi, static_cast<long long>(out_extent) - 1);
  if (hi < lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi + 1)};
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// (cin·kh·kw) × (oh·ow) patch matrix; taps outside the input are zero.
inline Tensor im2col(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t s, std::size_t p, std::size_t oh,
                     std::size_t ow) {
  const std::size_t cin = x.channels(), h = x.height(), w = x.width();
  Tensor col({cin * kh * kw, oh * ow});
  for (std::size_t ic = 0; ic < cin; ++ic) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      const auto [ylo, yhi] = valid_range(oh, h, ky, s, p);
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const auto [xlo, xhi] = valid_range(ow, w, kx, s, p);
        Real* row = &col[((ic * kh + ky) * kw + kx) * oh * ow];
        for (std::size_t oy = ylo; oy < yhi; ++oy) {
          const Real* in_row = &x.at(ic, oy * s + ky - p, 0);
          Real* dst = row + oy * ow;
          for (std::size_t ox = xlo; ox < xhi; ++ox) dst[ox] = in_row[ox * s + kx - p];
        }
      }
    }
  }
  return col;
}

inline void col2im_add(const Real* col, Tensor& gx, const Shape& xshape, std::size_t kh, std::size_t kw,
                       std::size_t s, std::size_t p, std::size_t oh, std::size_t ow) {
  const std::size_t cin = xshape[0], h = xshape[1], w = xshape[2];
  for (std::size_t ic = 0; ic < cin; ++ic) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      const auto [ylo, yhi] = valid_range(oh, h, ky, s, p);
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const auto [xlo, xhi] = valid_range(ow, w, kx, s, p);
        const Real* row = col + (((ic * kh + ky) * kw + kx) * oh * ow);
        for (std::size_t oy = ylo; oy < yhi; ++oy) {
          Real* dst = &gx.at(ic, oy * s + ky - p, 0);
          const Real* src = row + oy * ow;
          for (std::size_t ox = xlo; ox < xhi; ++ox) dst[ox * s + kx - p] += src[ox];
        }
      }
    }
  }
}

}  // namespace detail

/// Output extent of a strided, padded cross-correlation.
inline std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  const long long span = static_cast<long long>(in) + 2 * static_cast<long long>(pad) - static_cast<long long>(k);
  if (span < 0) return 0;
  return static_cast<std::size_t>(span) / stride + 1;
}

/// Graph handles for one convolution layer. Kernel is out×in×kH×kW.
struct ConvParams {
  Var weight;
  std::optional<Var> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

inline std::size_t same_padding(std::size_t kernel) { return (kernel - 1) / 2; }

/// Cross-correlation plus bias over a C×H×W input.
inline Var conv2d(const Var& input, const ConvParams& params) {
  Graph& g = input.graph();
  const Tensor& x = input.value();
  const Tensor& w = params.weight.value();
  detail::require_chw(x, "conv2d");
  if (w.rank() != 4) throw ShapeError("conv2d: kernel must be out×in×kH×kW, got " + shape_string(w.shape()));
  const std::size_t cin = x.channels(), h = x.height(), wd = x.width();
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin) {
    throw ShapeError("conv2d: channel mismatch, input has " + std::to_string(cin) + " channels, kernel expects " +
                     std::to_string(w.dim(1)));
  }
  if (params.stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (params.bias && params.bias->value().size() != cout) {
    throw ShapeError("conv2d: bias length " + std::to_string(params.bias->value().size()) + " != out channels " +
                     std::to_string(cout));
  }
  const std::size_t s = params.stride, p = params.padding;
  const std::size_t oh = conv_output_extent(h, kh, s, p), ow = conv_output_extent(wd, kw, s, p);
  if (oh == 0 || ow == 0) throw ShapeError("conv2d: zero-size output for input " + shape_string(x.shape()));

  const std::size_t patch = cin * kh * kw, pixels = oh * ow;
  Tensor col = detail::im2col(x, kh, kw, s, p, oh, ow);
  Tensor out({cout, oh, ow});
  {
    detail::MatMap o(out.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(pixels));
    o.noalias() = detail::ConstMatMap(w.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(patch)) *
                  detail::ConstMatMap(col.data().data(), static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(pixels));
    if (params.bias) {
      for (std::size_t oc = 0; oc < cout; ++oc) o.row(static_cast<Eigen::Index>(oc)).array() += params.bias->value()[oc];
    }
  }

  std::vector<Var> inputs{input, params.weight};
  if (params.bias) inputs.push_back(*params.bias);
  const bool has_bias = params.bias.has_value();
  auto backward = [col = std::move(col), w, xshape = x.shape(), kh, kw, s, p, has_bias](
                      const Tensor& gout, std::vector<Tensor*>& gin) {
    const auto cout = static_cast<Eigen::Index>(w.dim(0));
    const auto patch = static_cast<Eigen::Index>(col.dim(0));
    const auto pixels = static_cast<Eigen::Index>(col.dim(1));
    detail::ConstMatMap go(gout.data().data(), cout, pixels);
    if (has_bias && gin[2]) {
      for (Eigen::Index oc = 0; oc < cout; ++oc) (*gin[2])[static_cast<std::size_t>(oc)] += go.row(oc).sum();
    }
    if (gin[1]) {
      detail::MatMap gw(gin[1]->data().data(), cout, patch);
      gw.noalias() += go * detail::ConstMatMap(col.data().data(), patch, pixels).transpose();
    }
    if (gin[0]) {
      const detail::RowMatrix gcol = detail::ConstMatMap(w.data().data(), cout, patch).transpose() * go;
      detail::col2im_add(gcol.data(), *gin[0], xshape, kh, kw, s, p, gout.height(), gout.width());
    }
  };
  return g.record(std::move(out), std::move(inputs), std::move(backward));
}

enum class Activation { Relu, Sigmoid };

inline Real sigmoid_value(Real v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const Real e = std::exp(v);
  return e / (1.0 + e);
}

/// Elementwise max(0, x) or logistic sigmoid.
inline Var pointwise(const Var& input, Activation kind) {
  Graph& g = input.graph();
  const Tensor& x = input.value();
  Tensor out = Tensor::zeros_like(x);
  if (kind == Activation::Relu) {
    std::uint64_t h = detail::kFnvOffset;
    for (std::size_t i = 0; i < x.size(); ++i) {
      out[i] = x[i] > 0 ? x[i] : 0.0;
      if (x[i] > 0) h = detail::fnv1a(h, i);
    }
    g.note_kink_pattern(h);
    return g.record(std::move(out), {input}, [x](const Tensor& gout, std::vector<Tensor*>& gin) {
      Tensor& gx = *gin[0];
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0) gx[i] += gout[i];
      }
    });
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid_value(x[i]);
  Tensor y = out;
  return g.record(std::move(out), {input}, [y](const Tensor& gout, std::vector<Tensor*>& gin) {
    Tensor& gx = *gin[0];
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gout[i] * y[i] * (1.0 - y[i]);
  });
}

inline Var relu(const Var& x) { return pointwise(x, Activation::Relu); }
inline Var sigmoid(const Var& x) { return pointwise(x, Activation::Sigmoid); }

/// 2×2 max pooling with stride 2. Odd extents are replication-padded on the
/// bottom/right, so the output is ceil(H/2)×ceil(W/2).
inline Var maxpool2(const Var& input) {
  Graph& g = input.graph();
  const Tensor& x = input.value();
  detail::require_chw(x, "maxpool2");
  const std::size_t c = x.channels(), h = x.height(), w = x.width();
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor out({c, oh, ow});
  // Flat source index of each window's maximum; ties resolve to the first
  // element in row-major window order.
  std::vector<std::size_t> argmax(c * oh * ow);
  std::uint64_t hsh = detail::kFnvOffset;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = 0;
        Real best_v = 0;
        bool first = true;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          const std::size_t iy = std::min(2 * oy + dy, h - 1);
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t ix = std::min(2 * ox + dx, w - 1);
            const std::size_t idx = (ch * h + iy) * w + ix;
            if (first || x[idx] > best_v) {
              best = idx;
              best_v = x[idx];
              first = false;
            }
          }
        }
        const std::size_t o = (ch * oh + oy) * ow + ox;
        out[o] = best_v;
        argmax[o] = best;
        hsh = detail::fnv1a(hsh, best);
      }
    }
  }
  g.note_kink_pattern(hsh);
  return g.record(std::move(out), {input}, [argmax = std::move(argmax)](const Tensor& gout, std::vector<Tensor*>& gin) {
    Tensor& gx = *gin[0];
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += gout[o];
  });
}

/// Bilinear kernel of size 2f - f%2 used by the fixed upsampling layer.
inline Tensor bilinear_kernel(std::size_t factor) {
  if (factor < 1) throw ShapeError("upsample factor must be >= 1");
  const std::size_t k = 2 * factor - factor % 2;
  const Real f = static_cast<Real>((k + 1) / 2);
  const Real center = (k % 2 == 1) ? f - 1.0 : f - 0.5;
  Tensor kernel({1, 1, k, k});
  for (std::size_t y = 0; y < k; ++y) {
    for (std::size_t x = 0; x < k; ++x) {
      kernel[y * k + x] = (1.0 - std::abs(static_cast<Real>(y) - center) / f) *
                          (1.0 - std::abs(static_cast<Real>(x) - center) / f);
    }
  }
  return kernel;
}

/// Transposed convolution with stride `factor` and padding floor(factor/2),
/// applied channel-wise with a shared 1×1×k×k kernel and cropped to
/// out_h×out_w (top-left aligned). The kernel Var receives a gradient when it
/// requires one.
inline Var upsample_with_kernel(const Var& input, const Var& kernel, std::size_t factor, std::size_t out_h,
                                std::size_t out_w) {
  Graph& g = input.graph();
  const Tensor& x = input.value();
  const Tensor& kt = kernel.value();
  detail::require_chw(x, "upsample");
  if (factor < 1) throw ShapeError("upsample factor must be >= 1");
  const std::size_t k = 2 * factor - factor % 2;
  if (kt.shape() != Shape{1, 1, k, k}) {
    throw ShapeError("upsample: kernel shape " + shape_string(kt.shape()) + " does not match factor " +
                     std::to_string(factor));
  }
  const std::size_t c = x.channels(), h = x.height(), w = x.width();
  if (out_h == 0 || out_w == 0 || out_h > h * factor || out_w > w * factor) {
    throw ShapeError("upsample: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " exceeds upsampled extent of " + shape_string(x.shape()));
  }
  const long long pad = static_cast<long long>(factor / 2);
  Tensor out({c, out_h, out_w});
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long long oy = static_cast<long long>(iy * factor + ky) - pad;
          if (oy < 0 || oy >= static_cast<long long>(out_h)) continue;
          for (std::size_t ix = 0; ix < w; ++ix)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long long ox = static_cast<long long>(ix * factor + kx) - pad;
              if (ox < 0 || ox >= static_cast<long long>(out_w)) continue;
              fn((ch * h + iy) * w + ix, ky * k + kx,
                 (ch * out_h + static_cast<std::size_t>(oy)) * out_w + static_cast<std::size_t>(ox));
            }
        }
  };
  for_each_tap([&](std::size_t i, std::size_t kk, std::size_t o) { out[o] += x[i] * kt[kk]; });
  return g.record(std::move(out), {input, kernel},
                  [x, kt, for_each_tap](const Tensor& gout, std::vector<Tensor*>& gin) {
                    Tensor* gx = gin[0];
                    Tensor* gk = gin[1];
                    for_each_tap([&](std::size_t i, std::size_t kk, std::size_t o) {
                      if (gx) (*gx)[i] += kt[kk] * gout[o];
                      if (gk) (*gk)[kk] += x[i] * gout[o];
                    });
                  });
}

/// Fixed bilinear upsampling by `factor`, cropped to out_h×out_w
/// (defaults to the full H·factor×W·factor).
inline Var upsample(const Var& input, std::size_t factor, std::size_t out_h = 0, std::size_t out_w = 0) {
  if (factor < 1) throw ShapeError("upsample factor must be >= 1");
  const Tensor& x = input.value();
  detail::require_chw(x, "upsample");
  if (out_h == 0) out_h = x.height() * factor;
  if (out_w == 0) out_w = x.width() * factor;
  Var kernel = input.graph().constant(bilinear_kernel(factor));
  return upsample_with_kernel(input, kernel, factor, out_h, out_w);
}

/// Stacks C×H×W parts along the channel axis in argument order.
inline Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: empty list");
  Graph& g = parts.front().graph();
  const Tensor& first = parts.front().value();
  detail::require_chw(first, "concat_channels");
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Tensor& t = p.value();
    detail::require_chw(t, "concat_channels");
    if (t.height() != first.height() || t.width() != first.width()) {
      throw ShapeError("concat_channels: spatial mismatch " + shape_string(t.shape()) + " vs " +
                       shape_string(first.shape()));
    }
    channels += t.channels();
  }
  Tensor out({channels, first.height(), first.width()});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& t = p.value();
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    offsets.push_back(off);
    off += t.size();
  }
  return g.record(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                  [offsets](const Tensor& gout, std::vector<Tensor*>& gin) {
                    for (std::size_t k = 0; k < gin.size(); ++k) {
                      if (!gin[k]) continue;
                      Tensor& gp = *gin[k];
                      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += gout[offsets[k] + i];
                    }
                  });
}

inline Var concat_channels(std::initializer_list<Var> parts) {
  return concat_channels(std::span<const Var>(parts.begin(), parts.size()));
}

/// Channels [begin, begin+count) of a C×H×W tensor.
inline Var slice_channels(const Var& input, std::size_t begin, std::size_t count) {
  const Tensor& x = input.value();
  detail::require_chw(x, "slice_channels");
  if (count == 0 || begin + count > x.channels()) {
    throw ShapeError("slice_channels: range out of bounds for " + shape_string(x.shape()));
  }
  const std::size_t plane = x.height() * x.width();
  Tensor out({count, x.height(), x.width()});
  std::copy(x.data().begin() + static_cast<std::ptrdiff_t>(begin * plane),
            x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * plane), out.data().begin());
  const std::size_t off = begin * plane;
  return input.graph().record(std::move(out), {input}, [off](const Tensor& gout, std::vector<Tensor*>& gin) {
    Tensor& gx = *gin[0];
    for (std::size_t i = 0; i < gout.size(); ++i) gx[off + i] += gout[i];
  });
}

inline Var sum(const Var& input) {
  Real acc = 0.0;
  for (Real v : input.value().data()) acc += v;
  return input.graph().record(Tensor::scalar(acc), {input}, [](const Tensor& gout, std::vector<Tensor*>& gin) {
    Tensor& gx = *gin[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[0];
  });
}

inline Var scale(const Var& input, Real factor) {
  Tensor out = input.value();
  out *= factor;
  return input.graph().record(std::move(out), {input}, [factor](const Tensor& gout, std::vector<Tensor*>& gin) {
    Tensor& gx = *gin[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * gout[i];
  });
}

inline Var add(const Var& a, const Var& b) {
  a.value().require_same_shape(b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return a.graph().record(std::move(out), {a, b}, [](const Tensor& gout, std::vector<Tensor*>& gin) {
    for (Tensor* gp : gin) {
      if (gp) *gp += gout;
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  x.require_same_shape(y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return a.graph().record(std::move(out), {a, b}, [x, y](const Tensor& gout, std::vector<Tensor*>& gin) {
    if (gin[0]) {
      for (std::size_t i = 0; i < x.size(); ++i) (*gin[0])[i] += gout[i] * y[i];
    }
    if (gin[1]) {
      for (std::size_t i = 0; i < x.size(); ++i) (*gin[1])[i] += gout[i] * x[i];
    }
  });
}

/// Σ_k weights[k]·terms[k] over scalar terms.
inline Var weighted_sum(std::span<const Var> terms, std::span<const Real> weights) {
  if (terms.empty() || terms.size() != weights.size()) {
    throw ShapeError("weighted_sum: need equal, non-zero numbers of terms and weights");
  }
  Real acc = 0.0;
  for (std::size_t k = 0; k < terms.size(); ++k) acc += weights[k] * terms[k].value().item();
  std::vector<Real> w(weights.begin(), weights.end());
  return terms.front().graph().record(Tensor::scalar(acc), std::vector<Var>(terms.begin(), terms.end()),
                                      [w](const Tensor& gout, std::vector<Tensor*>& gin) {
                                        for (std::size_t k = 0; k < gin.size(); ++k) {
                                          if (gin[k]) (*gin[k])[0] += w[k] * gout[0];
                                        }
                                      });
}

}  // namespace m2fcn
