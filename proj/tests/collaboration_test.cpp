#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "sdcn/collaboration.hpp"
#include "sdcn/ops.hpp"

namespace sdcn {
namespace {

constexpr int kImage = 32;
constexpr int kMap = 16;
const MapFrame kFrame{kImage, kImage, kMap, kMap};

// (N+1) x h x w map whose foreground channels are blobs plus noise.
Tensor random_seg(Rng& rng, std::size_t n) {
  Tensor s({n + 1, kMap, kMap}, 0.0);
  for (std::size_t k = 0; k <= n; ++k) {
    const BinaryMask m = oracle::random_blobs(rng, kMap, kMap, rng.uniform_int(0, 2));
    for (int y = 0; y < kMap; ++y) {
      for (int x = 0; x < kMap; ++x) {
        const double base = m.get(x, y) ? 0.8 : 0.2;
        s.at(k, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            std::clamp(base + rng.normal(0.0, 0.15), 0.0, 1.0);
      }
    }
  }
  return s;
}

std::vector<BBox> random_boxes(Rng& rng, int count) {
  std::vector<BBox> b;
  for (int i = 0; i < count; ++i) b.push_back(oracle::random_box(rng, kImage, kImage));
  return b;
}

Tensor random_labels(Rng& rng, std::size_t n) {
  Tensor y({n}, 0.0);
  for (auto& v : y.values()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  return y;
}

Tensor random_scores(Rng& rng, std::size_t b, std::size_t n) {
  Tensor d({b, n});
  for (auto& v : d.values()) v = rng.uniform();
  return d;
}

TEST(Dseg, SingleComponentAnalyticColumn) {
  BinaryMask comp(kMap, kMap);
  comp.fill_box({2, 2, 6, 6});
  const std::vector<BinaryMask> comps{comp};
  const std::vector<BBox> boxes{{2, 2, 6, 6}, {10, 10, 14, 14}};
  const auto col = dseg_column(comps, boxes, 0.5);
  EXPECT_DOUBLE_EQ(col[0], 1.5);
  EXPECT_DOUBLE_EQ(col[1], 0.5);

  Tensor seg({2, kMap, kMap}, 0.0);
  for (int y = 2; y < 6; ++y) {
    for (int x = 2; x < 6; ++x) seg.at(0, y, x) = 0.9;
  }
  const std::vector<BBox> proposals{{4, 4, 12, 12}, {20, 20, 28, 28}};
  const Tensor d = build_dseg(seg, proposals, kFrame, Tensor({1}, 1.0));
  EXPECT_DOUBLE_EQ(d.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(d.at(1, 0), 0.5 / 1.5);
}

TEST(Dseg, EmptyMapGivesNeutralColumnAndAbsentClassIsZero) {
  Rng rng(1);
  const Tensor seg({3, kMap, kMap}, 0.1);
  const auto boxes = random_boxes(rng, 6);
  const Tensor d = build_dseg(seg, boxes, kFrame, Tensor({2}, std::vector<double>{1, 0}));
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    EXPECT_EQ(d.at(i, 0), 1.0);
    EXPECT_EQ(d.at(i, 1), 0.0);
  }
}

TEST(Dseg, MatchesOracleAndColumnMaxIsOne) {
  Rng rng(2);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 3;
    const Tensor seg = random_seg(rng, n);
    const auto boxes = random_boxes(rng, 5);
    const Tensor y = random_labels(rng, n);
    const Tensor got = build_dseg(seg, boxes, kFrame, y);
    const Tensor want = oracle::dseg(seg, boxes, kFrame, y, 0.5, 0.5);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-9);
    for (std::size_t k = 0; k < n; ++k) {
      double mx = 0.0;
      for (std::size_t i = 0; i < boxes.size(); ++i) mx = std::max(mx, got.at(i, k));
      EXPECT_EQ(mx, y[k] > 0.5 ? 1.0 : 0.0);
    }
  }
}

TEST(Dseg, GrowingAComponentInsideTheBoxNeverLowersTheEntry) {
  Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    const BBox box = oracle::random_box(rng, kMap, kMap);
    BinaryMask small = oracle::random_blobs(rng, kMap, kMap, 1);
    BinaryMask big = small;
    for (int y = box.y0; y < box.y1; ++y) {
      for (int x = box.x0; x < box.x1; ++x) {
        if (rng.uniform() < 0.5) big.set(x, y);
      }
    }
    const std::vector<BBox> boxes{box};
    const std::vector<BinaryMask> a{small};
    const std::vector<BinaryMask> b{big};
    EXPECT_GE(dseg_column(b, boxes, 0.5)[0], dseg_column(a, boxes, 0.5)[0]);
  }
}

TEST(Reweight, IdentityZeroAndNeverIncreases) {
  Rng rng(4);
  const Tensor dm = random_scores(rng, 4, 3);
  const Tensor same = reweight(Var::constant(dm), Tensor({4, 3}, 1.0)).value();
  for (std::size_t i = 0; i < dm.size(); ++i) EXPECT_EQ(same[i], dm[i]);
  const Tensor zero = reweight(Var::constant(dm), Tensor({4, 3}, 0.0)).value();
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  for (int t = 0; t < 300; ++t) {
    const Tensor seg = random_seg(rng, 3);
    const auto boxes = random_boxes(rng, 4);
    const Tensor y = random_labels(rng, 3);
    const Tensor prior = build_dseg(seg, boxes, kFrame, y);
    const Tensor d = random_scores(rng, 4, 3);
    const Tensor r = reweight(Var::constant(d), prior).value();
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_EQ(r[i], d[i] * prior[i]);
      EXPECT_LE(r[i], d[i]);
    }
  }
  EXPECT_THROW(reweight(Var::constant(dm), Tensor({3, 3}, 1.0)), std::invalid_argument);
}

TEST(Reweight, GradientFlowsThroughScoresOnly) {
  Rng rng(5);
  const Tensor prior = random_scores(rng, 4, 3);
  Var d = Var::input(random_scores(rng, 4, 3));
  backward(sum(reweight(d, prior)));
  for (std::size_t i = 0; i < prior.size(); ++i) EXPECT_EQ(d.grad()[i], prior[i]);
}

TEST(Sdet, FullMapProposalAndNoPositives) {
  const std::vector<BBox> full{{0, 0, kImage, kImage}};
  const Tensor d({1, 2}, std::vector<double>{0.7, 0.4});
  const Tensor s = build_sdet(d, full, kFrame, Tensor({2}, std::vector<double>{1, 0}));
  const std::size_t plane = kMap * kMap;
  for (std::size_t p = 0; p < plane; ++p) {
    EXPECT_EQ(s[p], 1.0);
    EXPECT_EQ(s[plane + p], 0.0);
    EXPECT_EQ(s[2 * plane + p], 0.0);
  }
  const Tensor none = build_sdet(d, full, kFrame, Tensor({2}, 0.0));
  for (std::size_t p = 0; p < plane; ++p) EXPECT_EQ(none[2 * plane + p], 1.0);
}

TEST(Sdet, MatchesPixelOracleAndComplementIdentity) {
  Rng rng(6);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 3;
    const auto boxes = random_boxes(rng, 6);
    const Tensor d = random_scores(rng, boxes.size(), n + 1);
    const Tensor y = random_labels(rng, n);
    const Tensor got = build_sdet(d, boxes, kFrame, y);
    const Tensor want = oracle::sdet(d, boxes, kFrame, y);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-9);
    const std::size_t plane = kMap * kMap;
    for (std::size_t k = 0; k < n; ++k) {
      double peak = 0.0;
      for (std::size_t p = 0; p < plane; ++p) peak = std::max(peak, got[k * plane + p]);
      EXPECT_TRUE(peak == 0.0 || peak == 1.0) << peak;
      if (y[k] <= 0.5) {
        EXPECT_EQ(peak, 0.0);
      }
    }
    for (std::size_t p = 0; p < plane; ++p) {
      double mx = 0.0;
      for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, got[k * plane + p]);
      EXPECT_NEAR(got[n * plane + p], 1.0 - mx, 1e-12);
      EXPECT_GE(got[n * plane + p], 0.0);
      EXPECT_LE(got[n * plane + p], 1.0);
    }
  }
}

TEST(Psi, CountRuleAndConstantChannels) {
  Tensor bg({2, 10, 10}, 0.0);
  for (std::size_t p = 0; p < 100; ++p) bg[100 + p] = 1.0;
  const PixelLabels a = psi_labels(bg, 0.10);
  EXPECT_EQ(a.count(1), 10u);
  EXPECT_EQ(a.count(kIgnoreLabel), 90u);
  Tensor c({3, 4, 4}, 0.0);
  for (std::size_t p = 0; p < 16; ++p) {
    c[p] = 0.2;
    c[16 + p] = 0.7;
    c[32 + p] = 0.1;
  }
  const PixelLabels b = psi_labels(c, 1.0);
  EXPECT_EQ(b.count(1), 16u);
}

TEST(Psi, MatchesSortOracleAndRespectsBudget) {
  Rng rng(7);
  for (int t = 0; t < 300; ++t) {
    Tensor s({3, 6, 6});
    // Coarse values force argmax and rank ties.
    for (auto& v : s.values()) v = rng.uniform_int(0, 4) / 4.0;
    const PixelLabels got = psi_labels(s, 0.10);
    EXPECT_EQ(got.labels, oracle::psi(s, 0.10));
    for (int k = 0; k < 3; ++k) EXPECT_LE(got.count(k), 3u);
  }
}

TEST(SegFromDet, IgnoredPixelsAndScriptedCase) {
  Var logits = Var::input(Tensor({2, 1, 2}, std::vector<double>{3.0, 0.5, -1.0, 0.5}));
  PixelLabels none{2, 1, {kIgnoreLabel, kIgnoreLabel}};
  EXPECT_EQ(seg_from_det_loss(logits, none).item(), 0.0);

  Tensor sharp({2, 1, 1}, std::vector<double>{40.0, -40.0});
  EXPECT_LT(seg_from_det_loss(Var::constant(sharp), PixelLabels{1, 1, {0}}).item(), 1e-12);

  PixelLabels two{2, 1, {0, 1}};
  const double p0 = std::exp(3.0) / (std::exp(3.0) + std::exp(-1.0));
  const double p1 = std::exp(0.5) / (std::exp(0.5) + std::exp(0.5));
  EXPECT_NEAR(seg_from_det_loss(logits, two).item(), -(std::log(p0) + std::log(p1)) / 2.0,
              1e-12);
}

TEST(SegFromDet, IgnoredPixelsGetZeroGradient) {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    Tensor l({4, 5, 5});
    for (auto& v : l.values()) v = rng.normal(0.0, 1.0);
    Tensor s({4, 5, 5});
    for (auto& v : s.values()) v = rng.uniform();
    const PixelLabels lab = psi_labels(s, 0.10);
    Var logits = Var::input(l);
    backward(seg_from_det_loss(logits, lab));
    double labelled_mass = 0.0;
    for (std::size_t p = 0; p < 25; ++p) {
      for (std::size_t k = 0; k < 4; ++k) {
        const double g = logits.grad()[k * 25 + p];
        if (lab.labels[p] == kIgnoreLabel) {
          EXPECT_EQ(g, 0.0);
        } else {
          labelled_mass += std::abs(g);
        }
      }
    }
    EXPECT_GT(labelled_mass, 0.0);
  }
}

TEST(TotalObjective, SumAndReductions) {
  const ObjectiveWeights w{1.0, 0.5, 0.1};
  EXPECT_DOUBLE_EQ(total_objective(2.0, 3.0, 4.0, 5.0, w), 4.0 + 0.1 * 5.0 + 2.0 + 0.5 * 3.0);
  const ObjectiveWeights no_seg{1.0, 1.0, 0.0};
  EXPECT_DOUBLE_EQ(total_objective(2.0, 3.0, 4.0, 5.0, no_seg), 4.0 + 2.0 + 3.0);

  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const double m = rng.uniform() * 5;
    const double r = rng.uniform() * 5;
    const double s = rng.uniform() * 5;
    const double d = rng.uniform() * 5;
    const ObjectiveWeights ow{rng.uniform(), rng.uniform(), rng.uniform()};
    const ObjectiveTerms terms{Var::constant(Tensor::scalar(m)), Var::constant(Tensor::scalar(r)),
                               Var::constant(Tensor::scalar(s)), Var::constant(Tensor::scalar(d))};
    const double want = s + ow.lambda_seg * d + ow.lambda_mil * m + ow.lambda_ref * r;
    EXPECT_NEAR(total_objective(terms, ow).item(), want, 1e-12);
    EXPECT_EQ(total_objective(terms, ow).item(), total_objective(m, r, s, d, ow));
  }
  // Detection only: the segmentation terms are undefined.
  ObjectiveTerms det{Var::constant(Tensor::scalar(1.5)), Var::constant(Tensor::scalar(2.0)), {},
                     {}};
  EXPECT_DOUBLE_EQ(total_objective(det, ObjectiveWeights{}).item(), 3.5);
}

}  // namespace
}  // namespace sdcn
