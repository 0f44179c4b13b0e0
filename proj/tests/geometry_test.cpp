#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "sdcn/geometry.hpp"

namespace sdcn {
namespace {

TEST(BoxIou, IdentityAndDisjoint) {
  EXPECT_EQ(box_iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_EQ(box_iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
}

TEST(BoxIou, HalfShiftMatchesPixelCount) {
  const BBox a{0, 0, 10, 10};
  const BBox b{5, 0, 15, 10};
  EXPECT_DOUBLE_EQ(box_iou(a, b), oracle::box_iou(a, b));
  EXPECT_DOUBLE_EQ(box_iou(a, b), 50.0 / 150.0);
}

TEST(BoxIou, SymmetricAndMatchesRasterisation) {
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    const BBox a = oracle::random_box(rng, 24, 24);
    const BBox b = oracle::random_box(rng, 24, 24);
    EXPECT_EQ(box_iou(a, b), box_iou(b, a));
    EXPECT_NEAR(box_iou(a, b), oracle::box_iou(a, b), 1e-12);
  }
}

TEST(ConnectedComponents, EmptyAndSolid) {
  EXPECT_TRUE(connected_components(BinaryMask(8, 8)).empty());
  BinaryMask m(8, 6);
  m.fill_box({2, 1, 6, 5});
  const auto comps = connected_components(m);
  ASSERT_EQ(comps.size(), 1u);
  EXPECT_EQ(comps[0], m);
}

TEST(ConnectedComponents, DiagonalTouchIsTwoComponents) {
  BinaryMask m(6, 6);
  m.fill_box({0, 0, 3, 3});
  m.fill_box({3, 3, 6, 6});
  const auto comps = connected_components(m);
  EXPECT_EQ(comps.size(), 2u);
  int count = 0;
  oracle::flood_fill_labels(m, &count);
  EXPECT_EQ(count, 2);
}

TEST(ConnectedComponents, PartitionMatchesFloodFill) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const BinaryMask m = oracle::random_mask(rng, 12, 10, 0.45);
    int count = 0;
    const auto lab = oracle::flood_fill_labels(m, &count);
    const auto comps = connected_components(m);
    ASSERT_EQ(static_cast<int>(comps.size()), count);
    BinaryMask uni(12, 10);
    for (std::size_t c = 0; c < comps.size(); ++c) {
      std::set<int> seen;
      for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 12; ++x) {
          if (!comps[c].get(x, y)) continue;
          ASSERT_FALSE(uni.get(x, y)) << "components overlap";
          uni.set(x, y);
          seen.insert(lab[y * 12 + x]);
        }
      }
      ASSERT_EQ(seen.size(), 1u);
      // Ordered by first pixel: component c is the (c+1)-th discovered.
      EXPECT_EQ(*seen.begin(), static_cast<int>(c) + 1);
    }
    EXPECT_EQ(uni, m);
  }
}

TEST(MaskBoxIou, AnalyticCases) {
  BinaryMask m(10, 10);
  m.fill_box({2, 2, 6, 6});
  EXPECT_EQ(mask_box_iou(m, {2, 2, 6, 6}), 1.0);
  EXPECT_EQ(mask_box_iou(m, {7, 7, 10, 10}), 0.0);
  BinaryMask left(10, 10);
  left.fill_box({2, 2, 4, 6});
  EXPECT_DOUBLE_EQ(mask_box_iou(left, {2, 2, 6, 6}), 0.5);
  EXPECT_THROW(mask_box_iou(BinaryMask(4, 4), {0, 0, 2, 2}), std::invalid_argument);
}

TEST(MaskBoxIou, MatchesPixelOracle) {
  Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    BinaryMask m = oracle::random_blobs(rng, 16, 16, 2);
    const BBox b = oracle::random_box(rng, 16, 16);
    EXPECT_NEAR(mask_box_iou(m, b), oracle::mask_box_iou(m, b), 1e-12);
  }
}

TEST(Proposals, SingleScaleGrid) {
  const double scales[] = {16};
  const double ratios[] = {1.0};
  const auto p = generate_proposals(32, 32, scales, ratios, 0.5);
  // Positions 0, 8, 16 per axis.
  ASSERT_EQ(p.size(), 9u);
  EXPECT_EQ(p[0], (BBox{0, 0, 16, 16}));
  EXPECT_EQ(p[1], (BBox{8, 0, 24, 16}));
  EXPECT_EQ(p[8], (BBox{16, 16, 32, 32}));
}

TEST(Proposals, OversizedScaleClipsToImage) {
  const double scales[] = {64};
  const double ratios[] = {1.0};
  const auto p = generate_proposals(32, 24, scales, ratios, 0.5);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], (BBox{0, 0, 32, 24}));
}

TEST(Proposals, TwoScalesConcatenate) {
  const double s1[] = {16};
  const double s2[] = {8};
  const double both[] = {16, 8};
  const double ratios[] = {1.0};
  auto a = generate_proposals(32, 32, s1, ratios, 0.5);
  const auto b = generate_proposals(32, 32, s2, ratios, 0.5);
  a.insert(a.end(), b.begin(), b.end());
  EXPECT_EQ(generate_proposals(32, 32, both, ratios, 0.5), a);
}

TEST(Proposals, DeterministicClippedUnique) {
  const double scales[] = {5, 10, 14, 17, 20};
  const double ratios[] = {0.5, 1.0, 2.0};
  const auto p = generate_proposals(32, 32, scales, ratios, 0.3);
  EXPECT_EQ(p, generate_proposals(32, 32, scales, ratios, 0.3));
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_TRUE(p[i].fits(32, 32));
    for (std::size_t j = i + 1; j < p.size(); ++j) EXPECT_NE(p[i], p[j]);
  }
}

TEST(Nms, TrivialCases) {
  const std::vector<BBox> one{{0, 0, 4, 4}};
  const std::vector<double> s1{0.5};
  EXPECT_EQ(nms(one, s1, 0.5), std::vector<std::size_t>{0});
  const std::vector<BBox> two{{0, 0, 4, 4}, {0, 0, 4, 4}};
  const std::vector<double> s2{0.9, 0.8};
  EXPECT_EQ(nms(two, s2, 0.5), std::vector<std::size_t>{0});
}

TEST(Nms, MatchesQuadraticReferenceAndIsAntichain) {
  Rng rng(4);
  for (int t = 0; t < 300; ++t) {
    std::vector<BBox> boxes;
    std::vector<double> scores;
    for (int i = 0; i < 10; ++i) {
      boxes.push_back(oracle::random_box(rng, 20, 20));
      // Coarse scores force ties.
      scores.push_back(rng.uniform_int(0, 5) / 5.0);
    }
    const auto kept = nms(boxes, scores, 0.5);
    EXPECT_EQ(kept, oracle::nms(boxes, scores, 0.5));
    for (std::size_t a = 0; a < kept.size(); ++a) {
      for (std::size_t b = a + 1; b < kept.size(); ++b) {
        EXPECT_LE(box_iou(boxes[kept[a]], boxes[kept[b]]), 0.5);
      }
    }
  }
}

TEST(BoxToGrid, MatchesCellCentreRule) {
  Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    const BBox b = oracle::random_box(rng, 32, 32);
    const BBox g = box_to_grid(b, 32, 32, 16, 16);
    BinaryMask expect = oracle::grid_cells(b, 32, 32, 16, 16);
    BinaryMask got(16, 16);
    got.fill_box(g);
    EXPECT_EQ(got, expect);
  }
}

TEST(MaskIntegral, CountsMatchLoop) {
  Rng rng(6);
  const BinaryMask m = oracle::random_mask(rng, 9, 7, 0.5);
  const MaskIntegral integral(m);
  for (int t = 0; t < 100; ++t) {
    const BBox b = oracle::random_box(rng, 9, 7);
    std::int64_t c = 0;
    for (int y = b.y0; y < b.y1; ++y) {
      for (int x = b.x0; x < b.x1; ++x) c += m.get(x, y);
    }
    EXPECT_EQ(integral.count_in(b), c);
  }
  EXPECT_EQ(integral.total(), m.count());
}

}  // namespace
}  // namespace sdcn
