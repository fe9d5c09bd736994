#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "m2fcn/m2fcn.hpp"
#include "oracles.hpp"

using namespace m2fcn;

namespace {

void randomise_heads(M2FCN& net, std::mt19937_64& rng) {
  std::normal_distribution<Real> n(0.0, 0.3);
  for (Parameter* p : net.parameters()) {
    if (p->name.find(".side") != std::string::npos && p->name.find(".upsample") == std::string::npos) {
      for (auto& v : p->value.storage()) v = n(rng);
    }
  }
}

BoundaryLabels random_labels(std::mt19937_64& rng, std::size_t h, std::size_t w, Real p) {
  std::bernoulli_distribution b(p);
  std::vector<std::uint8_t> mask(h * w);
  for (auto& v : mask) v = b(rng);
  return BoundaryLabels(h, w, mask);
}

}  // namespace

TEST(Network, StageInputChannels) {
  NetworkConfig cfg = toy_network_config();
  cfg.stages = 3;
  EXPECT_EQ(cfg.stage_input_channels(0), 1u);
  EXPECT_EQ(cfg.stage_input_channels(1), 4u);
  EXPECT_EQ(cfg.stage_input_channels(2), 4u);
  cfg.recursive = RecursiveInputs::single(2);
  EXPECT_EQ(cfg.stage_input_channels(1), 2u);
  const M2FCN net = M2FCN::build(cfg, 1);
  EXPECT_EQ(net.stage(1).trunk()[0][0].weight.value.dim(1), 2u);
  EXPECT_EQ(net.fusion(2).value.storage(), (std::vector<Real>(3, 1.0 / 3.0)));
}

TEST(Network, ForwardProducesAllSideMaps) {
  NetworkConfig cfg = toy_network_config();
  cfg.stages = 3;
  M2FCN net = M2FCN::build(cfg, 2);
  Graph g;
  const SideOutputs outs = forward_all(net, g, Tensor({1, 20, 18}, 0.4));
  EXPECT_EQ(outs.count(), 12u);
  for (const auto& stage : outs.side)
    for (const Var& s : stage) EXPECT_EQ(s.value().shape(), (Shape{1, 20, 18}));
  EXPECT_THROW(forward_all(net, g, Tensor({2, 8, 8})), ShapeError);
}

TEST(Network, LaterStagesDoNotAffectEarlierOutputs) {
  std::mt19937_64 rng(8);
  M2FCN net = M2FCN::build(toy_network_config(), 3);
  randomise_heads(net, rng);
  const Tensor image = oracle::random_tensor(rng, {1, 16, 16}, 0, 1);
  Graph g1;
  const Tensor before = forward_all(net, g1, image).fused[0].value();
  for (Parameter* p : net.stage_parameters(1)) p->value.fill(0.123);
  Graph g2;
  EXPECT_EQ(forward_all(net, g2, image).fused[0].value(), before);
}

TEST(Network, SingleRecursiveInputOnlySeesChosenLevel) {
  std::mt19937_64 rng(9);
  NetworkConfig cfg = toy_network_config();
  cfg.recursive = RecursiveInputs::single(2);
  M2FCN net = M2FCN::build(cfg, 4);
  randomise_heads(net, rng);
  const Tensor image = oracle::random_tensor(rng, {1, 16, 16}, 0, 1);
  Graph g1;
  const Tensor before = forward_all(net, g1, image).fused[1].value();
  // Levels 1 and 3 of stage 1 feed nothing downstream except their own losses.
  net.stage(0).heads()[0].score.weight.value.fill(5.0);
  net.stage(0).heads()[2].score.weight.value.fill(-5.0);
  Graph g2;
  EXPECT_EQ(forward_all(net, g2, image).fused[1].value(), before);
  net.stage(0).heads()[1].score.weight.value.fill(5.0);
  Graph g3;
  EXPECT_NE(forward_all(net, g3, image).fused[1].value(), before);
}

TEST(Network, InvalidRecursiveLevelRejected) {
  NetworkConfig cfg = toy_network_config();
  cfg.recursive = RecursiveInputs::single(4);
  EXPECT_THROW(M2FCN::build(cfg, 1), ConfigError);
  cfg.recursive = RecursiveInputs::single(0);
  EXPECT_THROW(M2FCN::build(cfg, 1), ConfigError);
}

TEST(TotalLoss, HandCaseOfZeroLogitsOnTwoByTwo) {
  // One boundary pixel of four: β = 3/4, each pixel costs ln 2 before weighting.
  const BoundaryLabels labels(2, 2, {1, 0, 0, 0});
  Graph g;
  const Real l = side_loss(g.constant(Tensor({1, 2, 2})), labels, class_balance_beta(labels)).value().item();
  EXPECT_NEAR(l, 1.5 * std::numbers::ln2, 1e-12);

  NetworkConfig cfg = toy_network_config();
  cfg.stages = 1;
  cfg.subnet.levels.resize(1);
  cfg.alpha_side = {0.0};
  M2FCN net = M2FCN::build(cfg, 1);
  Graph g2;
  const LossTerms terms = total_loss(forward_all(net, g2, Tensor({1, 2, 2}, 0.5)), labels, cfg);
  EXPECT_NEAR(terms.total.value().item(), 1.5 * std::numbers::ln2, 1e-12);
}

TEST(TotalLoss, MatchesScalarOracleWithRandomWeights) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<Real> u(0.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    NetworkConfig cfg = toy_network_config();
    for (std::size_t k = 0; k < cfg.stages * cfg.levels(); ++k) cfg.alpha_side.push_back(trial % 3 == 0 && k == 1 ? 0.0 : u(rng));
    for (std::size_t k = 0; k < cfg.stages; ++k) cfg.alpha_fuse.push_back(u(rng));
    M2FCN net = M2FCN::build(cfg, rng());
    randomise_heads(net, rng);
    const Tensor image = oracle::random_tensor(rng, {1, 12, 12}, 0, 1);
    const BoundaryLabels labels = random_labels(rng, 12, 12, 0.25);
    Graph g;
    const SideOutputs outs = forward_all(net, g, image);
    const LossTerms terms = total_loss(outs, labels, cfg);
    const Real beta = oracle::beta(labels);
    Real want = 0;
    for (std::size_t m = 0; m < cfg.stages; ++m) {
      for (std::size_t n = 0; n < cfg.levels(); ++n) {
        const Real l = oracle::side_loss(outs.side[m][n].value(), labels, beta);
        EXPECT_NEAR(terms.side[m][n], l, 1e-10);
        want += cfg.alpha_side[m * cfg.levels() + n] * l;
      }
      want += cfg.alpha_fuse[m] * oracle::side_loss(outs.fused[m].value(), labels, beta);
    }
    EXPECT_NEAR(terms.total.value().item(), want, 1e-10);
  }
}

TEST(TotalLoss, ZeroWeightTermsGetNoGradient) {
  NetworkConfig cfg = toy_network_config();
  cfg.stages = 1;
  cfg.alpha_side = {0.0};
  cfg.alpha_fuse = {0.0};
  M2FCN net = M2FCN::build(cfg, 1);
  Graph g;
  const LossTerms terms = total_loss(forward_all(net, g, Tensor({1, 8, 8}, 0.5)), BoundaryLabels(8, 8, std::vector<std::uint8_t>(64, 0)), cfg);
  EXPECT_EQ(terms.total.value().item(), 0.0);
  const Gradients grads = g.backward(terms.total);
  for (Parameter* p : net.parameters()) {
    const Tensor grad = grads.of(*p);
    for (Real v : grad.storage()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Network, AdoptStage1CopiesWeights) {
  M2FCN a = M2FCN::build(toy_network_config(), 1), b = M2FCN::build(toy_network_config(), 2);
  a.fusion(0).value.fill(0.7);
  b.adopt_stage1(a);
  EXPECT_EQ(b.stage(0).trunk()[2][1].weight.value, a.stage(0).trunk()[2][1].weight.value);
  EXPECT_EQ(b.fusion(0).value, a.fusion(0).value);
  EXPECT_NE(b.stage(1).trunk()[0][0].weight.value, a.stage(1).trunk()[0][0].weight.value);
  NetworkConfig other = toy_network_config();
  other.subnet.levels[0].channels = 4;
  EXPECT_THROW(b.adopt_stage1(M2FCN::build(other, 1)), ConfigError);
}

TEST(Network, PredictIsAProbabilityMap) {
  std::mt19937_64 rng(4);
  M2FCN net = M2FCN::build(toy_network_config(), 5);
  randomise_heads(net, rng);
  const Tensor p = predict(net, oracle::random_tensor(rng, {1, 10, 14}, 0, 1));
  EXPECT_EQ(p.shape(), (Shape{1, 10, 14}));
  for (Real v : p.storage()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
