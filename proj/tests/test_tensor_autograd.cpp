#include <gtest/gtest.h>

#include <random>

#include "m2fcn/m2fcn.hpp"
#include "oracles.hpp"

using namespace m2fcn;

TEST(Tensor, ShapeAndLengthMustAgree) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<Real>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0, 3}), ShapeError);
  Tensor t({2, 3, 4}, 1.5);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.channels(), 2u);
  EXPECT_EQ(t.height(), 3u);
  EXPECT_EQ(t.width(), 4u);
  EXPECT_EQ(t.at(1, 2, 3), 1.5);
}

TEST(Tensor, ItemRequiresScalar) {
  EXPECT_EQ(Tensor::scalar(3.0).item(), 3.0);
  EXPECT_THROW(Tensor({2}).item(), ShapeError);
}

TEST(Autograd, LinearFunctionGradient) {
  Parameter p{"p", Tensor({3}, std::vector<Real>{1, 2, 3})};
  Graph g;
  Var root = sum(scale(g.parameter(p), 2.0));
  const Tensor grad = g.backward(root).of(p);
  EXPECT_EQ(grad.storage(), (std::vector<Real>{2, 2, 2}));
}

TEST(Autograd, ElementwiseSquareGradient) {
  Parameter p{"p", Tensor({3}, std::vector<Real>{1, -2, 3})};
  Graph g;
  Var v = g.parameter(p);
  const Tensor grad = g.backward(sum(mul(v, v))).of(p);
  EXPECT_EQ(grad.storage(), (std::vector<Real>{2, -4, 6}));
}

TEST(Autograd, ParameterUsedTwiceAccumulates) {
  Parameter p{"p", Tensor({2}, std::vector<Real>{1, 1})};
  Graph g;
  Var a = g.parameter(p);
  Var b = g.parameter(p);
  const Tensor grad = g.backward(add(sum(scale(a, 3.0)), sum(b))).of(p);
  EXPECT_EQ(grad.storage(), (std::vector<Real>{4, 4}));
}

TEST(Autograd, BackwardRequiresScalarRoot) {
  Parameter p{"p", Tensor({2}, 1.0)};
  Graph g;
  EXPECT_THROW(g.backward(scale(g.parameter(p), 2.0)), ShapeError);
}

TEST(Autograd, FrozenParameterGetsZeroGradient) {
  Parameter p{"p", Tensor({2}, 1.0)};
  Graph g;
  const Gradients grads = g.backward(sum(g.parameter(p, false)));
  EXPECT_EQ(grads.of(p).storage(), (std::vector<Real>{0, 0}));
}

TEST(Autograd, NonFiniteValuesAreRejected) {
  Graph g;
  Var x = g.constant(Tensor({1}, 1e308));
  EXPECT_THROW(scale(x, 1e10), NumericError);
}

TEST(Autograd, ZeroUpstreamGradientGivesZeroParameterGradients) {
  std::mt19937_64 rng(3);
  Parameter w{"w", oracle::random_tensor(rng, {2, 1, 3, 3})};
  Graph g;
  Var x = g.constant(oracle::random_tensor(rng, {1, 5, 5}));
  Var y = relu(conv2d(x, ConvParams{g.parameter(w), std::nullopt, 1, 1}));
  const Tensor grad = g.backward(scale(sum(y), 0.0)).of(w);
  for (Real v : grad.storage()) EXPECT_EQ(v, 0.0);
}

TEST(Autograd, BackwardIsDeterministic) {
  std::mt19937_64 rng(5);
  NetworkConfig cfg = toy_network_config();
  M2FCN net = M2FCN::build(cfg, 11);
  for (Parameter* p : net.parameters()) {
    if (p->name.find(".side") != std::string::npos && p->name.find("upsample") == std::string::npos) {
      p->value = oracle::random_tensor(rng, p->value.shape(), -0.3, 0.3);
    }
  }
  const Tensor image = oracle::random_tensor(rng, {1, 12, 12}, 0, 1);
  const BoundaryLabels labels = boundary_from_segments(LabelImage(12, 12, std::vector<std::uint32_t>(144, 1)));
  auto run = [&] {
    Graph g;
    const auto terms = total_loss(forward_all(net, g, image), labels, cfg);
    const Gradients grads = g.backward(terms.total);
    std::vector<Tensor> out;
    for (Parameter* p : net.parameters()) out.push_back(grads.of(*p));
    return out;
  };
  EXPECT_EQ(run(), run());
}
