#include <gtest/gtest.h>

#include <random>

#include "m2fcn/m2fcn.hpp"
#include "oracles.hpp"

using namespace m2fcn;

namespace {

Tensor run_conv(const Tensor& x, const Tensor& w, const Tensor* b, std::size_t stride, std::size_t pad) {
  Graph g;
  ConvParams p{g.constant(w), std::nullopt, stride, pad};
  if (b) p.bias = g.constant(*b);
  return conv2d(g.constant(x), p).value();
}

}  // namespace

struct ConvCase {
  std::size_t cin, cout, h, w, kh, kw, stride, pad;
  bool bias;
};

class ConvMatchesLoops : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvMatchesLoops, ForwardValues) {
  const ConvCase c = GetParam();
  std::mt19937_64 rng(c.cin * 131 + c.h * 7 + c.kh);
  const Tensor x = oracle::random_tensor(rng, {c.cin, c.h, c.w});
  const Tensor w = oracle::random_tensor(rng, {c.cout, c.cin, c.kh, c.kw});
  const Tensor b = oracle::random_tensor(rng, {c.cout});
  const Tensor got = run_conv(x, w, c.bias ? &b : nullptr, c.stride, c.pad);
  const Tensor want = oracle::conv2d(x, w, c.bias ? &b : nullptr, c.stride, c.pad);
  ASSERT_EQ(got.shape(), want.shape());
  EXPECT_LT(max_abs_diff(got, want), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvMatchesLoops,
                         ::testing::Values(ConvCase{1, 1, 5, 5, 3, 3, 1, 1, true}, ConvCase{3, 4, 7, 6, 3, 3, 1, 1, true},
                                           ConvCase{2, 3, 8, 9, 1, 1, 1, 0, false},
                                           ConvCase{2, 2, 9, 7, 3, 2, 2, 0, true},
                                           ConvCase{1, 2, 6, 6, 5, 5, 1, 2, false},
                                           ConvCase{4, 1, 10, 11, 3, 3, 3, 1, true}));

TEST(Conv2d, RejectsMismatchedKernel) {
  Graph g;
  Var x = g.constant(Tensor({2, 4, 4}));
  EXPECT_THROW(conv2d(x, ConvParams{g.constant(Tensor({1, 3, 3, 3})), std::nullopt, 1, 1}), ShapeError);
  EXPECT_THROW(conv2d(x, ConvParams{g.constant(Tensor({1, 2, 3, 3})), g.constant(Tensor({2})), 1, 1}), ShapeError);
  EXPECT_THROW(conv2d(x, ConvParams{g.constant(Tensor({1, 2, 7, 7})), std::nullopt, 1, 0}), ShapeError);
}

TEST(Conv2d, SamePaddingKeepsExtent) {
  EXPECT_EQ(same_padding(1), 0u);
  EXPECT_EQ(same_padding(3), 1u);
  EXPECT_EQ(same_padding(5), 2u);
}

TEST(Maxpool2, MatchesWindowMaxIncludingOddExtents) {
  std::mt19937_64 rng(4);
  for (auto shape : {Shape{1, 4, 4}, Shape{2, 5, 7}, Shape{3, 1, 1}, Shape{1, 6, 3}}) {
    const Tensor x = oracle::random_tensor(rng, shape);
    Graph g;
    const Tensor got = maxpool2(g.constant(x)).value();
    const Tensor want = oracle::maxpool2(x);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_EQ(max_abs_diff(got, want), 0.0);
  }
}

TEST(Maxpool2, GradientGoesToFirstMaximumOnTies) {
  Parameter p{"x", Tensor({1, 2, 2}, 1.0)};
  Graph g;
  const Tensor grad = g.backward(sum(maxpool2(g.parameter(p)))).of(p);
  EXPECT_EQ(grad.storage(), (std::vector<Real>{1, 0, 0, 0}));
}

TEST(Upsample, MatchesTentFormula) {
  std::mt19937_64 rng(9);
  for (std::size_t f : {1, 2, 3, 4, 8}) {
    const Tensor x = oracle::random_tensor(rng, {2, 3, 4});
    Graph g;
    const Tensor got = upsample(g.constant(x), f).value();
    const Tensor want = oracle::bilinear_upsample(x, f, 3 * f, 4 * f);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LT(max_abs_diff(got, want), 1e-12) << "factor " << f;
  }
}

TEST(Upsample, CropIsTopLeftOfFullOutput) {
  std::mt19937_64 rng(10);
  const Tensor x = oracle::random_tensor(rng, {1, 4, 4});
  Graph g;
  const Tensor full = upsample(g.constant(x), 4).value();
  const Tensor cropped = upsample(g.constant(x), 4, 13, 10).value();
  for (std::size_t y = 0; y < 13; ++y)
    for (std::size_t xx = 0; xx < 10; ++xx) EXPECT_EQ(cropped.at(0, y, xx), full.at(0, y, xx));
  EXPECT_THROW(upsample(g.constant(x), 4, 17, 4), ShapeError);
}

TEST(Upsample, BilinearKernelReproducesConstantsInTheInterior) {
  Graph g;
  const Tensor out = upsample(g.constant(Tensor({1, 6, 6}, 2.5)), 2).value();
  for (std::size_t y = 1; y + 1 < 12; ++y)
    for (std::size_t x = 1; x + 1 < 12; ++x) EXPECT_NEAR(out.at(0, y, x), 2.5, 1e-12);
}

TEST(Pointwise, ReluAndSigmoidValues) {
  Graph g;
  Var x = g.constant(Tensor({4}, std::vector<Real>{-2, 0, 0.5, 800}));
  EXPECT_EQ(relu(x).value().storage(), (std::vector<Real>{0, 0, 0.5, 800}));
  const Tensor s = sigmoid(x).value();
  EXPECT_NEAR(s[0], 1 / (1 + std::exp(2.0)), 1e-15);
  EXPECT_EQ(s[1], 0.5);
  EXPECT_EQ(s[3], 1.0);
  EXPECT_TRUE(std::isfinite(sigmoid_value(-800)));
}

TEST(Channels, ConcatThenSliceRoundTrips) {
  std::mt19937_64 rng(2);
  const Tensor a = oracle::random_tensor(rng, {2, 3, 3});
  const Tensor b = oracle::random_tensor(rng, {1, 3, 3});
  Graph g;
  Var c = concat_channels({g.constant(a), g.constant(b)});
  EXPECT_EQ(c.value().channels(), 3u);
  EXPECT_EQ(slice_channels(c, 0, 2).value(), a);
  EXPECT_EQ(slice_channels(c, 2, 1).value(), b);
  EXPECT_THROW(slice_channels(c, 2, 2), ShapeError);
  EXPECT_THROW(concat_channels({g.constant(a), g.constant(Tensor({1, 2, 3}))}), ShapeError);
}

TEST(SideLoss, MatchesTermByTermOracle) {
  std::mt19937_64 rng(77);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor logits = oracle::random_tensor(rng, {1, 5, 6}, -4, 4);
    std::vector<std::uint8_t> mask(30);
    for (auto& m : mask) m = coin(rng);
    const BoundaryLabels labels(5, 6, mask);
    const Real beta = class_balance_beta(labels);
    EXPECT_DOUBLE_EQ(beta, oracle::beta(labels));
    Graph g;
    EXPECT_NEAR(side_loss(g.constant(logits), labels, beta).value().item(), oracle::side_loss(logits, labels, beta),
                1e-10);
  }
}

TEST(SideLoss, StableForLargeLogits) {
  const BoundaryLabels labels(1, 2, {1, 0});
  Graph g;
  const Real l = side_loss(g.constant(Tensor({1, 1, 2}, std::vector<Real>{-1000, 1000})), labels, 0.5).value().item();
  EXPECT_NEAR(l, 0.0, 1e-300);
  const Real big = side_loss(g.constant(Tensor({1, 1, 2}, std::vector<Real>{1000, -1000})), labels, 0.5).value().item();
  EXPECT_NEAR(big, 1000.0, 1e-9);
}

TEST(SideLoss, RejectsNonFiniteLogits) {
  const BoundaryLabels labels(1, 1, {0});
  Graph g;
  EXPECT_THROW(side_loss(g.constant(Tensor({1, 1, 1}, std::vector<Real>{NAN})), labels, 0.5), NumericError);
}

TEST(ClassBalance, DegenerateAndRatioModes) {
  EXPECT_EQ(class_balance_beta(BoundaryLabels(1, 3, {0, 0, 0})), 0.0);
  EXPECT_EQ(class_balance_beta(BoundaryLabels(1, 3, {1, 1, 1})), 1.0);
  EXPECT_DOUBLE_EQ(class_balance_beta(BoundaryLabels(1, 4, {1, 0, 0, 0})), 0.75);
  EXPECT_DOUBLE_EQ(class_balance_beta(BoundaryLabels(1, 4, {1, 0, 0, 0}), BetaMode::Ratio), 3.0);
}

TEST(Fuse, IsWeightedSumOfSideMaps) {
  std::mt19937_64 rng(5);
  const Tensor a = oracle::random_tensor(rng, {1, 3, 4});
  const Tensor b = oracle::random_tensor(rng, {1, 3, 4});
  Graph g;
  Var sides[] = {g.constant(a), g.constant(b)};
  const Tensor f = fuse(sides, g.constant(Tensor({1, 2, 1, 1}, std::vector<Real>{0.25, -2}))).value();
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(f[i], 0.25 * a[i] - 2 * b[i], 1e-15);
  EXPECT_THROW(fuse(sides, g.constant(Tensor({1, 3, 1, 1}))), ShapeError);
}
