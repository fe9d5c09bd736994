#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "m2fcn/autograd.hpp"

namespace m2fcn {

struct GradCheckReport {
  Real max_rel_error = 0.0;
  std::size_t checked = 0;
  // Entries whose ±eps probes changed a ReLU mask or a pooling argmax.
  std::size_t skipped = 0;
  std::string worst_entry;
};

/// Builds a scalar in a fresh graph from the current parameter values.
using ScalarFn = std::function<Var(Graph&)>;

/// Compares reverse-mode gradients of `fn` with central differences for every
/// entry of `params`. The relative error of an entry is
/// |analytic - cd| / max(|analytic|, |cd|, 1e-8). A nonzero `max_entries`
/// checks that many evenly spaced entries per parameter instead of all.
inline GradCheckReport grad_check(const ScalarFn& fn, std::span<Parameter* const> params, Real eps,
                                  std::size_t max_entries = 0) {
  if (!(eps > 0)) throw Error("grad_check: eps must be positive");

  struct Probe {
    Real value;
    std::uint64_t signature;
  };
  auto evaluate = [&fn]() {
    Graph g;
    Var root = fn(g);
    const Real v = root.value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
    return Probe{v, g.kink_signature()};
  };

  Gradients grads;
  std::uint64_t base_signature = 0;
  {
    Graph g;
    Var root = fn(g);
    if (!std::isfinite(root.value().item())) throw NumericError("grad_check: function value is not finite");
    grads = g.backward(root);
    base_signature = g.kink_signature();
  }

  GradCheckReport report;
  for (Parameter* p : params) {
    const Tensor analytic = grads.of(*p);
    const std::size_t n = p->value.size();
    const std::size_t count = max_entries == 0 ? n : std::min(n, max_entries);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t i = count == n ? k : k * n / count;
      const Real original = p->value[i];
      p->value[i] = original + eps;
      const Probe plus = evaluate();
      p->value[i] = original - eps;
      const Probe minus = evaluate();
      p->value[i] = original;
      if (plus.signature != base_signature || minus.signature != base_signature) {
        ++report.skipped;
        continue;
      }
      const Real cd = (plus.value - minus.value) / (2.0 * eps);
      const Real a = analytic[i];
      const Real rel = std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-8});
      ++report.checked;
      if (rel >= report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_entry = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace m2fcn
