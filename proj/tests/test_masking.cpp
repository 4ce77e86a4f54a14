#include "capit/masking.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "capit/error.hpp"

using namespace capit;

namespace {

BoolGrid box(int h, int w, int i0, int j0, int i1, int j1) {
  BoolGrid g = BoolGrid::Constant(h, w, false);
  g.block(i0, j0, i1 - i0, j1 - j0).setConstant(true);
  return g;
}

BinaryMask random_mask(int h, int w, double p_bg, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p_bg);
  BoolGrid g(h, w);
  for (int k = 0; k < h * w; ++k) g.data()[k] = b(rng);
  return BinaryMask(g);
}

}  // namespace

TEST(BuildForegroundMask, ThresholdSelectsRegions) {
  InstanceProposals p{4, 4, {}};
  p.regions.push_back({box(4, 4, 0, 0, 2, 2), 0.6, "car"});
  p.regions.push_back({box(4, 4, 2, 2, 4, 4), 0.4, "car"});
  const auto m = build_foreground_mask(p, 0.5);
  EXPECT_EQ(m.background_count(), 12);
  EXPECT_FALSE(m.background(0, 0));
  EXPECT_TRUE(m.background(3, 3));
}

TEST(BuildForegroundMask, EdgeCases) {
  InstanceProposals empty{3, 5, {}};
  EXPECT_EQ(build_foreground_mask(empty).background_count(), 15);

  InstanceProposals full{3, 3, {{BoolGrid::Constant(3, 3, true), 0.0, "pedestrian"}}};
  EXPECT_EQ(build_foreground_mask(full, 0.0).background_count(), 0);

  InstanceProposals other{3, 3, {{BoolGrid::Constant(3, 3, true), 0.9, "pole"}}};
  EXPECT_EQ(build_foreground_mask(other, 0.5).background_count(), 9);

  InstanceProposals bad{3, 3, {{BoolGrid::Constant(2, 3, true), 0.9, "car"}}};
  EXPECT_THROW(build_foreground_mask(bad), InvalidInput);
  EXPECT_THROW(build_foreground_mask(empty, 1.5), InvalidInput);
}

TEST(BuildForegroundMask, RaisingThresholdNeverGrowsForeground) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    InstanceProposals p{8, 8, {}};
    for (int r = 0; r < 5; ++r) p.regions.push_back({!random_mask(8, 8, 0.7, rng).grid, u(rng), "car"});
    int prev_fg = -1;
    for (double t : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
      const int fg = 64 - build_foreground_mask(p, t).background_count();
      if (prev_fg >= 0) EXPECT_LE(fg, prev_fg);
      prev_fg = fg;
    }
  }
}

TEST(JointBackground, Examples) {
  BoolGrid x = BoolGrid::Constant(2, 2, true), y = BoolGrid::Constant(2, 2, true);
  x(0, 0) = false;
  y(1, 1) = false;
  const auto m = joint_background(BinaryMask(x), BinaryMask(y));
  EXPECT_EQ(m.background_count(), 2);
  EXPECT_TRUE(m.background(0, 1));
  EXPECT_TRUE(m.background(1, 0));

  const auto bg = BinaryMask::all_background(2, 2);
  EXPECT_EQ(joint_background(bg, bg), bg);
  EXPECT_EQ(joint_background(BinaryMask::all_foreground(2, 2), BinaryMask(y)).background_count(), 0);
  EXPECT_THROW(joint_background(bg, BinaryMask::all_background(2, 3)), InvalidInput);
}

TEST(JointBackground, AlgebraicProperties) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto a = random_mask(6, 7, 0.6, rng), b = random_mask(6, 7, 0.6, rng);
    const auto ab = joint_background(a, b);
    EXPECT_EQ(ab, joint_background(b, a));
    EXPECT_EQ(joint_background(a, a), a);
    EXPECT_EQ(joint_background(a, BinaryMask::all_background(6, 7)), a);
    int pop = 0;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 7; ++j) pop += a.background(i, j) && b.background(i, j);
    EXPECT_EQ(ab.background_count(), pop);
  }
}

TEST(DownsampleMask, BlockFractionRule) {
  EXPECT_EQ(downsample_mask(BinaryMask::all_background(4, 4), 2), BinaryMask::all_background(2, 2));
  BoolGrid g = BoolGrid::Constant(4, 4, true);
  g(0, 1) = false;
  EXPECT_FALSE(downsample_mask(BinaryMask(g), 2, 1.0).background(0, 0));
  EXPECT_TRUE(downsample_mask(BinaryMask(g), 2, 0.5).background(0, 0));
  EXPECT_TRUE(downsample_mask(BinaryMask(g), 2, 1.0).background(1, 1));
  EXPECT_THROW(downsample_mask(BinaryMask(g), 3), InvalidInput);
}

TEST(MaskIo, PngAndProposalRoundTrip) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "capit_mask_io";
  fs::create_directories(dir);
  std::mt19937_64 rng(2);
  const auto m = random_mask(10, 12, 0.5, rng);
  write_mask_png((dir / "m.png").string(), m);
  EXPECT_EQ(read_mask_png((dir / "m.png").string()), m);

  InstanceProposals p{10, 12, {}};
  p.regions.push_back({random_mask(10, 12, 0.3, rng).grid, 0.73, "car"});
  p.regions.push_back({random_mask(10, 12, 0.3, rng).grid, 0.125, "pole"});
  write_proposals((dir / "f.txt").string(), "f", p);
  const auto back = read_proposals((dir / "f.txt").string());
  ASSERT_EQ(back.regions.size(), 2u);
  EXPECT_EQ(back.height, 10);
  EXPECT_EQ(back.regions[1].class_label, "pole");
  EXPECT_DOUBLE_EQ(back.regions[0].confidence, 0.73);
  EXPECT_TRUE((back.regions[0].bitmap == p.regions[0].bitmap).all());
  fs::remove_all(dir);
}
