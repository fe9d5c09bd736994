#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "m2fcn/network_config.hpp"

namespace m2fcn {

/// Logit maps of one forward pass: side[m][n] = S^{m,n}, fused[m] = S^{f,m}.
struct SideOutputs {
  std::vector<std::vector<Var>> side;
  std::vector<Var> fused;

  std::size_t count() const {
    std::size_t c = fused.size();
    for (const auto& s : side) c += s.size();
    return c;
  }
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// M sub-nets chained through recursive inputs, plus per-stage fusion weights.
class M2FCN {
 public:
  M2FCN() = default;

  /// Stage m gets its own seed stream; fusion weights start at 1/N.
  static M2FCN build(const NetworkConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    M2FCN net;
    net.config_ = cfg;
    for (std::size_t m = 0; m < cfg.stages; ++m) {
      SubNetConfig sc = cfg.subnet;
      sc.input_channels = cfg.stage_input_channels(m);
      const std::string prefix = "stage" + std::to_string(m + 1);
      net.stages_.push_back(build_subnet(sc, detail::splitmix64(seed + m), prefix));
      const std::size_t n = cfg.levels();
      net.fusion_.push_back(Parameter{prefix + ".fuse.weight", Tensor({1, n, 1, 1}, 1.0 / static_cast<Real>(n)), true});
    }
    return net;
  }

  const NetworkConfig& config() const { return config_; }
  std::size_t stage_count() const { return stages_.size(); }
  SubNet& stage(std::size_t m) { return stages_.at(m); }
  const SubNet& stage(std::size_t m) const { return stages_.at(m); }
  Parameter& fusion(std::size_t m) { return fusion_.at(m); }
  const Parameter& fusion(std::size_t m) const { return fusion_.at(m); }

  /// Parameters of stage m (sub-net and its fusion weights).
  std::vector<Parameter*> stage_parameters(std::size_t m) {
    std::vector<Parameter*> out = stages_.at(m).parameters();
    out.push_back(&fusion_.at(m));
    return out;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (std::size_t m = 0; m < stages_.size(); ++m) {
      auto sp = stage_parameters(m);
      out.insert(out.end(), sp.begin(), sp.end());
    }
    return out;
  }

  std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> out;
    for (Parameter* p : const_cast<M2FCN*>(this)->parameters()) out.push_back(p);
    return out;
  }

  /// Copies stage 1 (and its fusion weights) from a trained network with the
  /// same sub-net configuration.
  void adopt_stage1(const M2FCN& trained) {
    if (trained.stage_count() == 0 || !(trained.stage(0).config() == stages_.at(0).config())) {
      throw ConfigError("adopt_stage1: stage-1 configurations differ");
    }
    stages_[0] = trained.stage(0);
    fusion_[0].value = trained.fusion(0).value;
  }

 private:
  NetworkConfig config_;
  std::vector<SubNet> stages_;
  std::vector<Parameter> fusion_;
};

/// X^{(1)} = X; later stages get X ⊕ the selected previous side maps.
inline Var stage_input(const Var& image, std::span<const Var> previous, const RecursiveInputs& mode) {
  if (previous.empty()) return image;
  if (mode.kind == RecursiveInputs::Kind::All) {
    std::vector<Var> parts{image};
    parts.insert(parts.end(), previous.begin(), previous.end());
    return concat_channels(parts);
  }
  if (mode.level < 1 || mode.level > previous.size()) {
    throw ConfigError("stage_input: single(" + std::to_string(mode.level) + ") but only " +
                      std::to_string(previous.size()) + " side outputs");
  }
  return concat_channels({image, previous[mode.level - 1]});
}

/// Runs every stage in order inside `g`; the result is one differentiable graph.
inline SideOutputs forward_all(M2FCN& net, Graph& g, const Tensor& image) {
  const NetworkConfig& cfg = net.config();
  if (image.rank() != 3 || image.channels() != cfg.image_channels()) {
    throw ShapeError("forward_all: expected " + std::to_string(cfg.image_channels()) + "×H×W image, got " +
                     shape_string(image.shape()));
  }
  Var x = g.constant(image);
  SideOutputs out;
  std::vector<Var> previous;
  for (std::size_t m = 0; m < net.stage_count(); ++m) {
    Var in = stage_input(x, previous, cfg.recursive);
    std::vector<Var> sides = subnet_forward(net.stage(m), in);
    Parameter& h = net.fusion(m);
    out.fused.push_back(fuse(sides, g.parameter(h, h.trainable)));
    previous.clear();
    if (m + 1 < net.stage_count()) {
      for (const Var& s : sides) {
        previous.push_back(cfg.recursive_activation == RecursiveActivation::Sigmoid ? sigmoid(s) : s);
      }
    }
    out.side.push_back(std::move(sides));
  }
  return out;
}

/// Boundary probability map σ(S^{f,M}); values near 0 mark membrane.
inline Tensor predict(M2FCN& net, const Tensor& image) {
  Graph g;
  SideOutputs outs = forward_all(net, g, image);
  return sigmoid(outs.fused.back()).value();
}

struct LossTerms {
  Var total;
  std::vector<std::vector<Real>> side;  // ℓ^{m,n}
  std::vector<Real> fused;              // ℓ^{f,m}
};

/// Σ α_{m,n} ℓ^{m,n} + Σ α_{f,m} ℓ^{f,m} with one β per image. Terms whose
/// weight is zero are left out of the graph.
inline LossTerms total_loss(const SideOutputs& outs, const BoundaryLabels& labels, const NetworkConfig& cfg) {
  if (outs.side.size() != cfg.stages || outs.fused.size() != cfg.stages) {
    throw ShapeError("total_loss: side outputs do not cover " + std::to_string(cfg.stages) + " stages");
  }
  const Real beta = class_balance_beta(labels, cfg.beta_mode);
  LossTerms terms;
  std::vector<Var> vars;
  std::vector<Real> weights;
  for (std::size_t m = 0; m < cfg.stages; ++m) {
    if (outs.side[m].size() != cfg.levels()) throw ShapeError("total_loss: stage side-output count mismatch");
    terms.side.emplace_back();
    for (std::size_t n = 0; n < cfg.levels(); ++n) {
      Var l = side_loss(outs.side[m][n], labels, beta);
      terms.side.back().push_back(l.value().item());
      if (cfg.side_weight(m, n) != 0.0) {
        vars.push_back(l);
        weights.push_back(cfg.side_weight(m, n));
      }
    }
  }
  for (std::size_t m = 0; m < cfg.stages; ++m) {
    Var l = side_loss(outs.fused[m], labels, beta);
    terms.fused.push_back(l.value().item());
    if (cfg.fuse_weight(m) != 0.0) {
      vars.push_back(l);
      weights.push_back(cfg.fuse_weight(m));
    }
  }
  terms.total = vars.empty() ? scale(sum(outs.fused.front()), 0.0) : weighted_sum(vars, weights);
  return terms;
}

}  // namespace m2fcn
