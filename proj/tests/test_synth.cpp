#include <gtest/gtest.h>

#include "m2fcn/m2fcn.hpp"

using namespace m2fcn;

TEST(Synth, ShapesAndRanges) {
  const SynthParams p{48, 40, 6, 1.0};
  const SynthResult r = render_synthetic(3, p);
  EXPECT_EQ(r.sample.image.shape(), (Shape{1, 48, 40}));
  EXPECT_EQ(r.sample.labels.height(), 48u);
  ASSERT_TRUE(r.sample.segments.has_value());
  EXPECT_EQ(r.sample.segments->segment_count(), 6u);
  for (Real v : r.sample.image.storage()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Synth, LabelsAreTheTwoSidedBoundaryOfTheSegments) {
  const SynthResult r = render_synthetic(5, SynthParams{});
  EXPECT_EQ(r.sample.labels, boundary_from_segments(*r.sample.segments));
  EXPECT_GT(r.sample.labels.boundary_count(), 0u);
  EXPECT_LT(r.sample.labels.boundary_count(), r.sample.labels.pixels() / 2);
}

TEST(Synth, EverySegmentIsOneConnectedRegion) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SynthResult r = render_synthetic(seed, SynthParams{});
    const LabelImage& segs = *r.sample.segments;
    // A flood from each segment's first pixel staying inside that segment
    // must reach all of its pixels.
    Tensor inside({1, segs.height(), segs.width()});
    for (std::uint32_t id = 1; id <= 8; ++id) {
      for (std::size_t i = 0; i < segs.size(); ++i) inside[i] = segs[i] == id ? 1.0 : 0.0;
      EXPECT_EQ(label_components(inside, 0.5).segment_count(), 1u) << "seed " << seed << " id " << id;
    }
  }
}

TEST(Synth, InkDarkensTheBoundary) {
  const SynthResult r = render_synthetic(7, SynthParams{});
  Real ink = 0, interior = 0;
  std::size_t n_ink = 0, n_interior = 0;
  for (std::size_t i = 0; i < r.ink.size(); ++i) {
    if (r.ink[i]) {
      ink += r.sample.image[i];
      ++n_ink;
    } else if (!r.sample.labels.is_boundary(i)) {
      interior += r.sample.image[i];
      ++n_interior;
    }
  }
  ASSERT_GT(n_ink, 0u);
  EXPECT_LT(ink / n_ink, 0.2);
  EXPECT_GT(interior / n_interior, 0.5);
  // Every boundary pair has at least one inked side.
  const LabelImage& segs = *r.sample.segments;
  for (std::size_t y = 0; y < segs.height(); ++y)
    for (std::size_t x = 0; x + 1 < segs.width(); ++x)
      if (segs.at(y, x) != segs.at(y, x + 1)) {
        EXPECT_TRUE(r.ink[y * segs.width() + x] || r.ink[y * segs.width() + x + 1]);
      }
}

TEST(Synth, DeterministicInSeed) {
  const auto a = synth_corpus(11, 3, SynthParams{});
  const auto b = synth_corpus(11, 3, SynthParams{});
  const auto c = synth_corpus(12, 3, SynthParams{});
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].labels, b[i].labels);
  }
  EXPECT_NE(a[0].image, c[0].image);
  EXPECT_NE(a[0].image, a[1].image);
}

TEST(Synth, RejectsBadParameters) {
  EXPECT_THROW(render_synthetic(1, SynthParams{64, 64, 1, 0.5}), ConfigError);
  EXPECT_THROW(render_synthetic(1, SynthParams{16, 64, 4, 0.5}), ConfigError);
  EXPECT_THROW(render_synthetic(1, SynthParams{32, 32, 20, 0.5}), ConfigError);
  EXPECT_THROW(render_synthetic(1, SynthParams{64, 64, 8, -1}), ConfigError);
}
