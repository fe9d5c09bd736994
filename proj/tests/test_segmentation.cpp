#include <gtest/gtest.h>

#include <random>

#include "m2fcn/m2fcn.hpp"
#include "oracles.hpp"

using namespace m2fcn;

TEST(Components, MatchFloodFillOracle) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor prob = oracle::random_tensor(rng, {1, 9 + trial % 5, 7 + trial % 3}, 0, 1);
    for (Real t : {0.2, 0.5, 0.8}) EXPECT_EQ(label_components(prob, t), oracle::flood_components(prob, t));
  }
}

TEST(Components, FourConnectivityOnly) {
  const Tensor prob({1, 2, 2}, std::vector<Real>{1, 0, 0, 1});
  const LabelImage seg = label_components(prob, 0.5);
  EXPECT_EQ(seg.ids(), (std::vector<std::uint32_t>{1, 0, 0, 2}));
}

TEST(Components, ThresholdIsInclusiveAndValidated) {
  const Tensor prob({1, 1, 2}, std::vector<Real>{0.5, 0.49});
  EXPECT_EQ(label_components(prob, 0.5).ids(), (std::vector<std::uint32_t>{1, 0}));
  EXPECT_THROW(label_components(prob, 1.5), ConfigError);
  EXPECT_THROW(label_components(prob, -0.1), ConfigError);
  EXPECT_THROW(label_components(Tensor({2, 1, 2}), 0.5), ShapeError);
}

TEST(Flood, EveryPixelLabelledWhenAnySeedExists) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor prob = oracle::random_tensor(rng, {1, 12, 10}, 0, 1);
    const LabelImage seeds = label_components(prob, 0.5);
    const LabelImage seg = segment_from_boundary(prob, 0.5);
    if (seeds.segment_count() == 0) continue;
    EXPECT_EQ(seg.segment_count(), seeds.segment_count());
    for (std::size_t i = 0; i < seg.size(); ++i) {
      EXPECT_NE(seg[i], 0u);
      if (seeds[i]) EXPECT_EQ(seg[i], seeds[i]);
    }
    // Grown regions stay connected: components of each id count once.
    for (std::uint32_t id = 1; id <= seg.segment_count(); ++id) {
      Tensor mask({1, 12, 10});
      for (std::size_t i = 0; i < seg.size(); ++i) mask[i] = seg[i] == id;
      EXPECT_EQ(label_components(mask, 0.5).segment_count(), 1u);
    }
  }
}

TEST(Flood, BoundaryGoesToTheBrighterSide) {
  // Two seeds separated by a dark ridge; the ridge pixel adjacent to the
  // brighter valley is claimed first.
  const Tensor prob({1, 1, 5}, std::vector<Real>{0.9, 0.3, 0.1, 0.2, 0.9});
  const LabelImage seg = segment_from_boundary(prob, 0.5);
  EXPECT_EQ(seg.ids(), (std::vector<std::uint32_t>{1, 1, 1, 2, 2}));
}

TEST(Flood, AllBelowThresholdLeavesZeros) {
  const LabelImage seg = segment_from_boundary(Tensor({1, 3, 3}, 0.1), 0.5);
  EXPECT_EQ(seg.segment_count(), 0u);
}
