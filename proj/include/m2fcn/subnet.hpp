#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "m2fcn/ops.hpp"

namespace m2fcn {

/// One level of a sub-net: `convs` conv+ReLU layers of width `channels`.
struct LevelSpec {
  std::size_t convs = 2;
  std::size_t channels = 8;
  std::size_t kernel = 3;

  friend bool operator==(const LevelSpec&, const LevelSpec&) = default;
};

struct SubNetConfig {
  std::vector<LevelSpec> levels;
  std::size_t input_channels = 1;
  // Side-output upsampling kernels start bilinear and stay frozen unless set.
  bool learn_upsample = false;

  std::size_t level_count() const { return levels.size(); }
  friend bool operator==(const SubNetConfig&, const SubNetConfig&) = default;
};

/// Desk-scale sub-net: 3 levels of widths 8/16/16 with two 3×3 convs each.
inline SubNetConfig toy_subnet_config() {
  return SubNetConfig{{{2, 8, 3}, {2, 16, 3}, {2, 16, 3}}, 1, false};
}

/// VGG-16-shaped sub-net: 5 levels, conv counts 2/2/3/3/3, widths 64..512.
inline SubNetConfig paper_subnet_config() {
  return SubNetConfig{{{2, 64, 3}, {2, 128, 3}, {3, 256, 3}, {3, 512, 3}, {3, 512, 3}}, 1, false};
}

inline void validate(const SubNetConfig& config) {
  if (config.levels.empty()) throw ConfigError("sub-net needs at least one level");
  if (config.input_channels == 0) throw ConfigError("sub-net input channels must be positive");
  for (std::size_t n = 0; n < config.levels.size(); ++n) {
    const LevelSpec& l = config.levels[n];
    const std::string where = "level " + std::to_string(n + 1);
    if (l.convs == 0) throw ConfigError(where + ": convs per level must be positive");
    if (l.channels == 0) throw ConfigError(where + ": channels must be positive");
    if (l.kernel == 0 || l.kernel % 2 == 0) throw ConfigError(where + ": kernel must be odd and positive");
  }
}

/// Upsampling factor of the side head on (1-based) `level`.
inline std::size_t level_stride(std::size_t level) { return std::size_t{1} << (level - 1); }

struct LevelGeometry {
  std::size_t stride = 1;
  std::size_t receptive_field = 1;
  friend bool operator==(const LevelGeometry&, const LevelGeometry&) = default;
};

/// Stride and receptive field at the last conv of (1-based) `level`, composing
/// rf += (k-1)·jump, jump *= stride over the convs and 2×2/2 pools before it.
inline LevelGeometry receptive_field(const SubNetConfig& config, std::size_t level) {
  if (level < 1 || level > config.levels.size()) {
    throw ConfigError("receptive_field: level " + std::to_string(level) + " outside [1," +
                      std::to_string(config.levels.size()) + "]");
  }
  std::size_t rf = 1, jump = 1;
  for (std::size_t n = 0; n < level; ++n) {
    if (n > 0) {
      rf += jump;  // 2×2 pool
      jump *= 2;
    }
    for (std::size_t c = 0; c < config.levels[n].convs; ++c) rf += (config.levels[n].kernel - 1) * jump;
  }
  return {jump, rf};
}

struct ConvLayer {
  Parameter weight;
  Parameter bias;
};

/// 1×1 conv to one channel followed by upsampling back to input resolution.
struct SideHead {
  ConvLayer score;
  Parameter upsample;
  std::size_t factor = 1;
};

/// One stage: conv/ReLU levels separated by pooling, one side head per level.
class SubNet {
 public:
  SubNet() = default;
  SubNet(SubNetConfig config, std::vector<std::vector<ConvLayer>> trunk, std::vector<SideHead> heads)
      : config_(std::move(config)), trunk_(std::move(trunk)), heads_(std::move(heads)) {}

  const SubNetConfig& config() const { return config_; }
  std::size_t level_count() const { return heads_.size(); }
  const std::vector<std::vector<ConvLayer>>& trunk() const { return trunk_; }
  const std::vector<SideHead>& heads() const { return heads_; }
  std::vector<std::vector<ConvLayer>>& trunk() { return trunk_; }
  std::vector<SideHead>& heads() { return heads_; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& level : trunk_) {
      for (auto& layer : level) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
      }
    }
    for (auto& head : heads_) {
      out.push_back(&head.score.weight);
      out.push_back(&head.score.bias);
      out.push_back(&head.upsample);
    }
    return out;
  }

  std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> out;
    for (Parameter* p : const_cast<SubNet*>(this)->parameters()) out.push_back(p);
    return out;
  }

 private:
  SubNetConfig config_;
  std::vector<std::vector<ConvLayer>> trunk_;
  std::vector<SideHead> heads_;
};

/// He-normal trunk weights, zero biases, zero side heads, bilinear
/// upsampling kernels. Deterministic in `seed`.
inline SubNet build_subnet(const SubNetConfig& config, std::uint64_t seed, const std::string& prefix = "stage1") {
  validate(config);
  std::mt19937_64 rng(seed);
  std::vector<std::vector<ConvLayer>> trunk;
  std::vector<SideHead> heads;
  std::size_t in_ch = config.input_channels;
  for (std::size_t n = 0; n < config.levels.size(); ++n) {
    const LevelSpec& spec = config.levels[n];
    const std::string lname = prefix + ".level" + std::to_string(n + 1);
    std::vector<ConvLayer> layers;
    for (std::size_t c = 0; c < spec.convs; ++c) {
      const std::size_t fan_in = in_ch * spec.kernel * spec.kernel;
      std::normal_distribution<Real> normal(0.0, std::sqrt(2.0 / static_cast<Real>(fan_in)));
      Tensor w({spec.channels, in_ch, spec.kernel, spec.kernel});
      for (auto& v : w.storage()) v = normal(rng);
      const std::string cname = lname + ".conv" + std::to_string(c + 1);
      layers.push_back(ConvLayer{Parameter{cname + ".weight", std::move(w), true},
                                 Parameter{cname + ".bias", Tensor({spec.channels}), true}});
      in_ch = spec.channels;
    }
    trunk.push_back(std::move(layers));

    const std::string hname = prefix + ".side" + std::to_string(n + 1);
    const std::size_t factor = level_stride(n + 1);
    heads.push_back(SideHead{
        ConvLayer{Parameter{hname + ".weight", Tensor({1, spec.channels, 1, 1}), true},
                  Parameter{hname + ".bias", Tensor({1}), true}},
        Parameter{hname + ".upsample", bilinear_kernel(factor), config.learn_upsample}, factor});
  }
  return SubNet(config, std::move(trunk), std::move(heads));
}

/// Side-output logit maps (1×H×W each, one per level) for a C×H×W input.
inline std::vector<Var> subnet_forward(SubNet& net, const Var& input) {
  const Tensor& x0 = input.value();
  if (x0.rank() != 3 || x0.channels() != net.config().input_channels) {
    throw ShapeError("sub-net expects " + std::to_string(net.config().input_channels) + "×H×W input, got " +
                     shape_string(x0.shape()));
  }
  Graph& g = input.graph();
  const std::size_t h = x0.height(), w = x0.width();
  std::vector<Var> sides;
  Var x = input;
  for (std::size_t n = 0; n < net.level_count(); ++n) {
    if (n > 0) x = maxpool2(x);
    for (auto& layer : net.trunk()[n]) {
      const std::size_t k = layer.weight.value.dim(2);
      x = relu(conv2d(x, ConvParams{g.parameter(layer.weight, layer.weight.trainable),
                                    g.parameter(layer.bias, layer.bias.trainable), 1, same_padding(k)}));
    }
    SideHead& head = net.heads()[n];
    Var score = conv2d(x, ConvParams{g.parameter(head.score.weight, head.score.weight.trainable),
                                     g.parameter(head.score.bias, head.score.bias.trainable), 1, 0});
    Var kernel = g.parameter(head.upsample, head.upsample.trainable);
    sides.push_back(upsample_with_kernel(score, kernel, head.factor, h, w));
  }
  return sides;
}

}  // namespace m2fcn
