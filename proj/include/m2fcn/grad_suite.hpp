#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "m2fcn/gradcheck.hpp"
#include "m2fcn/network.hpp"

namespace m2fcn {

struct GradSuiteEntry {
  std::string name;
  GradCheckReport report;
};

struct GradSuiteOptions {
  Real eps = 1e-3;
  // Evenly spaced entries checked per network parameter; 0 checks all.
  std::size_t network_entries = 256;
  std::size_t image_size = 8;
};

namespace detail {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, Real scale = 1.0) {
  std::normal_distribution<Real> n(0.0, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = n(rng);
  return t;
}

inline BoundaryLabels random_labels(std::mt19937_64& rng, std::size_t h, std::size_t w, Real p = 0.3) {
  std::bernoulli_distribution b(p);
  std::vector<std::uint8_t> mask(h * w);
  for (auto& v : mask) v = b(rng) ? 1 : 0;
  return BoundaryLabels(h, w, std::move(mask));
}

// Σ out ⊙ r for a fixed random r, a scalar whose gradient reaches every entry.
inline Var project(const Var& out, const Tensor& r) { return sum(mul(out, out.graph().constant(r))); }

}  // namespace detail

/// Every differentiable op on small random shapes, then the full network
/// objective. Each entry reports the worst relative error of its check.
inline std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed, const GradSuiteOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  std::vector<GradSuiteEntry> out;
  auto check = [&](const std::string& name, std::vector<Parameter*> params, const ScalarFn& fn,
                   std::size_t max_entries = 0) {
    out.push_back({name, grad_check(fn, params, opt.eps, max_entries)});
  };
  using detail::random_tensor;

  {
    Parameter x{"x", random_tensor(rng, {3, 7, 6})}, w{"w", random_tensor(rng, {4, 3, 3, 3}, 0.5)},
        b{"b", random_tensor(rng, {4})};
    const Tensor r = random_tensor(rng, {4, 7, 6});
    check("conv2d 3x3 same", {&x, &w, &b}, [&](Graph& g) {
      return detail::project(conv2d(g.parameter(x), ConvParams{g.parameter(w), g.parameter(b), 1, 1}), r);
    });
  }
  {
    Parameter x{"x", random_tensor(rng, {2, 8, 7})}, w{"w", random_tensor(rng, {3, 2, 3, 2}, 0.5)};
    const Tensor r = random_tensor(rng, {3, conv_output_extent(8, 3, 2, 0), conv_output_extent(7, 2, 2, 0)});
    check("conv2d stride 2", {&x, &w}, [&](Graph& g) {
      return detail::project(conv2d(g.parameter(x), ConvParams{g.parameter(w), std::nullopt, 2, 0}), r);
    });
  }
  {
    Parameter x{"x", random_tensor(rng, {2, 7, 5})};
    const Tensor r = random_tensor(rng, {2, 4, 3});
    check("maxpool2", {&x}, [&](Graph& g) { return detail::project(maxpool2(g.parameter(x)), r); });
  }
  for (std::size_t f : {2, 3}) {
    const std::size_t k = 2 * f - f % 2;
    Parameter x{"x", random_tensor(rng, {2, 3, 4})}, kern{"kernel", random_tensor(rng, {1, 1, k, k})};
    const std::size_t oh = 3 * f - 1, ow = 4 * f;
    const Tensor r = random_tensor(rng, {2, oh, ow});
    check("upsample x" + std::to_string(f), {&x, &kern}, [&, f, oh, ow](Graph& g) {
      return detail::project(upsample_with_kernel(g.parameter(x), g.parameter(kern), f, oh, ow), r);
    });
  }
  {
    Parameter x{"x", random_tensor(rng, {2, 4, 5})};
    const Tensor r = random_tensor(rng, {2, 4, 5});
    check("relu", {&x}, [&](Graph& g) { return detail::project(relu(g.parameter(x)), r); });
    check("sigmoid", {&x}, [&](Graph& g) { return detail::project(sigmoid(g.parameter(x)), r); });
  }
  {
    Parameter a{"a", random_tensor(rng, {2, 3, 4})}, b{"b", random_tensor(rng, {1, 3, 4})};
    const Tensor r = random_tensor(rng, {2, 3, 4});
    check("concat/slice", {&a, &b}, [&](Graph& g) {
      Var c = concat_channels({g.parameter(a), g.parameter(b)});
      return detail::project(slice_channels(c, 1, 2), r);
    });
  }
  {
    Parameter a{"a", random_tensor(rng, {1, 3, 3})}, b{"b", random_tensor(rng, {1, 3, 3})};
    check("add/mul/scale/weighted_sum", {&a, &b}, [&](Graph& g) {
      Var va = g.parameter(a), vb = g.parameter(b);
      Var t1 = sum(mul(add(va, vb), va));
      Var t2 = sum(scale(vb, -1.5));
      std::vector<Var> terms{t1, t2};
      std::vector<Real> weights{0.7, 2.0};
      return weighted_sum(terms, weights);
    });
  }
  {
    Parameter s{"logits", random_tensor(rng, {1, 6, 5}, 2.0)};
    const BoundaryLabels labels = detail::random_labels(rng, 6, 5);
    const Real beta = class_balance_beta(labels);
    check("side_loss", {&s}, [&](Graph& g) { return side_loss(g.parameter(s), labels, beta); });
  }
  {
    std::vector<Parameter> sides;
    for (int n = 0; n < 3; ++n) sides.push_back({"side" + std::to_string(n), random_tensor(rng, {1, 5, 4})});
    Parameter h{"h", random_tensor(rng, {1, 3, 1, 1})};
    const Tensor r = random_tensor(rng, {1, 5, 4});
    check("fuse", {&sides[0], &sides[1], &sides[2], &h}, [&](Graph& g) {
      std::vector<Var> vs;
      for (auto& p : sides) vs.push_back(g.parameter(p));
      return detail::project(fuse(vs, g.parameter(h)), r);
    });
  }
  {
    // Side heads and fusion weights are randomised so that no gradient is
    // structurally zero.
    M2FCN net = M2FCN::build(toy_network_config(), rng());
    for (Parameter* p : net.parameters()) {
      if (p->name.find(".side") != std::string::npos && p->name.find(".upsample") == std::string::npos) {
        p->value = random_tensor(rng, p->value.shape(), 0.3);
      }
      if (p->name.find(".fuse.") != std::string::npos) p->value = random_tensor(rng, p->value.shape(), 0.5);
    }
    const std::size_t hw = opt.image_size;
    std::uniform_real_distribution<Real> u(0.0, 1.0);
    Tensor image({1, hw, hw});
    for (auto& v : image.storage()) v = u(rng);
    const BoundaryLabels labels = detail::random_labels(rng, hw, hw, 0.2);
    std::vector<Parameter*> params;
    for (Parameter* p : net.parameters()) {
      if (p->trainable) params.push_back(p);
    }
    check(
        "2-stage network total_loss", params,
        [&](Graph& g) { return total_loss(forward_all(net, g, image), labels, net.config()).total; },
        opt.network_entries);
  }
  return out;
}

}  // namespace m2fcn
