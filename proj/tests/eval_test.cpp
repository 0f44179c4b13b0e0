#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "sdcn/eval.hpp"

namespace sdcn {
namespace {

constexpr int kSize = 24;

struct Scene {
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
};

// A few images, two classes, detections near or away from the objects.
Scene random_scene(Rng& rng, int images, int dets_per_image) {
  Scene s;
  for (int img = 0; img < images; ++img) {
    const int objects = rng.uniform_int(0, 2);
    for (int o = 0; o < objects; ++o) {
      s.gts.push_back({img, oracle::random_box(rng, kSize, kSize), rng.uniform_int(0, 1)});
    }
    for (int d = 0; d < dets_per_image; ++d) {
      BBox b = oracle::random_box(rng, kSize, kSize);
      if (objects > 0 && rng.uniform() < 0.5) {
        // Jitter an object so some detections are true positives.
        const GroundTruth& g = s.gts[s.gts.size() - 1 - rng.uniform_int(0, objects - 1)];
        b = g.box;
        b.x0 = std::max(0, b.x0 + rng.uniform_int(-1, 1));
        b.x1 = std::max(b.x0 + 1, std::min(kSize, b.x1 + rng.uniform_int(-1, 1)));
      }
      s.dets.push_back({img, b, rng.uniform_int(0, 1), rng.uniform_int(0, 10) / 10.0});
    }
  }
  return s;
}

TEST(AveragePrecision, PerfectAndDisjoint) {
  const std::vector<GroundTruth> gts{{0, {0, 0, 5, 5}, 0}, {1, {10, 10, 20, 20}, 0}};
  const std::vector<Detection> perfect{{0, {0, 0, 5, 5}, 0, 0.9},
                                       {1, {10, 10, 20, 20}, 0, 0.8},
                                       {1, {0, 0, 3, 3}, 0, 0.1}};
  EXPECT_EQ(average_precision(perfect, gts, 0).value(), 1.0);
  const std::vector<Detection> disjoint{{0, {10, 10, 15, 15}, 0, 0.9},
                                        {1, {0, 0, 4, 4}, 0, 0.8}};
  EXPECT_EQ(average_precision(disjoint, gts, 0).value(), 0.0);
  EXPECT_FALSE(average_precision(perfect, gts, 1).has_value());
}

TEST(AveragePrecision, DuplicateDetectionIsFalsePositive) {
  const std::vector<GroundTruth> gts{{0, {0, 0, 8, 8}, 0}, {0, {12, 12, 20, 20}, 0}};
  const std::vector<Detection> dets{{0, {0, 0, 8, 8}, 0, 0.9},
                                    {0, {0, 0, 8, 8}, 0, 0.8},
                                    {0, {12, 12, 20, 20}, 0, 0.7}};
  // P/R: (1, .5), (.5, .5), (2/3, 1) -> 0.5 * 1 + 0.5 * 2/3.
  EXPECT_NEAR(average_precision(dets, gts, 0).value(), 0.5 + 1.0 / 3.0, 1e-12);
}

TEST(AveragePrecision, MatchesPrefixOracle) {
  Rng rng(1);
  int defined = 0;
  for (int t = 0; t < 400; ++t) {
    const Scene s = random_scene(rng, 3, 4);
    for (int cls = 0; cls < 2; ++cls) {
      const auto got = average_precision(s.dets, s.gts, cls);
      const auto want = oracle::average_precision(s.dets, s.gts, cls);
      ASSERT_EQ(got.has_value(), want.has_value());
      if (!got) continue;
      ++defined;
      EXPECT_NEAR(*got, *want, 1e-9);
    }
  }
  EXPECT_GE(defined, 200);
}

TEST(AveragePrecision, RemovingAFalsePositiveNeverLowersIt) {
  Rng rng(2);
  int removals = 0;
  for (int t = 0; t < 300; ++t) {
    const Scene s = random_scene(rng, 3, 5);
    const auto base = average_precision(s.dets, s.gts, 0);
    if (!base) continue;
    for (std::size_t i = 0; i < s.dets.size(); ++i) {
      const Detection& d = s.dets[i];
      if (d.cls != 0) continue;
      bool can_match = false;
      for (const auto& g : s.gts) {
        if (g.image_id == d.image_id && g.cls == 0 && box_iou(g.box, d.box) >= 0.5) {
          can_match = true;
        }
      }
      if (can_match) continue;
      std::vector<Detection> fewer = s.dets;
      fewer.erase(fewer.begin() + static_cast<std::ptrdiff_t>(i));
      EXPECT_GE(average_precision(fewer, s.gts, 0).value(), *base - 1e-12);
      ++removals;
    }
  }
  EXPECT_GT(removals, 100);
}

TEST(AveragePrecision, ElevenPointOnKnownCurve) {
  const std::vector<GroundTruth> gts{{0, {0, 0, 8, 8}, 0}, {0, {12, 12, 20, 20}, 0}};
  const std::vector<Detection> dets{{0, {0, 0, 8, 8}, 0, 0.9},
                                    {0, {1, 15, 4, 20}, 0, 0.8},
                                    {0, {12, 12, 20, 20}, 0, 0.7}};
  // Envelope: 1 up to recall .5, 2/3 up to recall 1.
  EXPECT_NEAR(average_precision(dets, gts, 0, 0.5, true).value(),
              (6 * 1.0 + 5 * (2.0 / 3.0)) / 11.0, 1e-12);
}

TEST(MeanOf, SkipsUndefined) {
  const std::vector<std::optional<double>> v{0.2, std::nullopt, 0.6};
  EXPECT_NEAR(mean_of(v).value(), 0.4, 1e-15);
  const std::vector<std::optional<double>> none{std::nullopt};
  EXPECT_FALSE(mean_of(none).has_value());
}

TEST(Corloc, TrivialAndHandCountedCases) {
  const std::vector<GroundTruth> gts{{0, {0, 0, 8, 8}, 0},
                                     {1, {4, 4, 12, 12}, 0},
                                     {2, {10, 10, 20, 20}, 0},
                                     {2, {0, 0, 6, 6}, 0},
                                     {3, {2, 2, 9, 9}, 0},
                                     {4, {0, 0, 5, 5}, 1}};
  const std::vector<Detection> exact{{0, {0, 0, 8, 8}, 0, 0.5},
                                     {1, {4, 4, 12, 12}, 0, 0.5},
                                     {2, {0, 0, 6, 6}, 0, 0.5},
                                     {3, {2, 2, 9, 9}, 0, 0.5}};
  EXPECT_EQ(corloc(exact, gts, 0).value(), 1.0);
  const std::vector<Detection> far{{0, {15, 15, 20, 20}, 0, 0.5}};
  EXPECT_EQ(corloc(far, gts, 0).value(), 0.0);
  // Image 0: top box hits. Image 1: top box misses, a lower one hits.
  // Image 2: top box hits the second object. Image 3: no detection.
  const std::vector<Detection> mixed{{0, {0, 0, 8, 7}, 0, 0.9},
                                     {1, {14, 14, 20, 20}, 0, 0.8},
                                     {1, {4, 4, 12, 12}, 0, 0.3},
                                     {2, {0, 0, 6, 6}, 0, 0.6},
                                     {2, {10, 10, 20, 20}, 1, 0.9}};
  EXPECT_DOUBLE_EQ(corloc(mixed, gts, 0).value(), 2.0 / 4.0);
  EXPECT_FALSE(corloc(mixed, gts, 2).has_value());
}

TEST(BoxesToSegmap, EmptySingleAndUnion) {
  const auto empty = boxes_to_segmap({}, 2, 10, 10, 0.5);
  ASSERT_EQ(empty.size(), 2u);
  EXPECT_EQ(empty[0].count(), 0);
  const std::vector<Detection> one{{0, {1, 2, 4, 6}, 1, 0.9}};
  const auto m = boxes_to_segmap(one, 2, 10, 10, 0.5);
  BinaryMask want(10, 10);
  want.fill_box({1, 2, 4, 6});
  EXPECT_EQ(m[1], want);
  EXPECT_EQ(m[0].count(), 0);

  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<Detection> dets;
    for (int i = 0; i < 4; ++i) {
      dets.push_back({0, oracle::random_box(rng, 16, 16), 0, rng.uniform()});
    }
    const auto got = boxes_to_segmap(dets, 1, 16, 16, 0.4);
    std::int64_t area = 0;
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        bool in = false;
        for (const auto& d : dets) in = in || (d.score >= 0.4 && d.box.contains(x, y));
        area += in;
        EXPECT_EQ(got[0].get(x, y), in);
      }
    }
    EXPECT_EQ(got[0].count(), area);
  }
}

TEST(PixelPrecisionRecall, TrivialCases) {
  BinaryMask gt(8, 8);
  gt.fill_box({0, 0, 4, 8});
  const std::vector<BinaryMask> g{gt};
  const auto same = pixel_precision_recall(g, g);
  EXPECT_EQ(same.precision.value(), 1.0);
  EXPECT_EQ(same.recall.value(), 1.0);
  BinaryMask half(8, 8);
  half.fill_box({0, 0, 2, 8});
  const std::vector<BinaryMask> h{half};
  const auto hr = pixel_precision_recall(h, g);
  EXPECT_EQ(hr.precision.value(), 1.0);
  EXPECT_EQ(hr.recall.value(), 0.5);
  const std::vector<BinaryMask> none{BinaryMask(8, 8)};
  EXPECT_FALSE(pixel_precision_recall(none, g).precision.has_value());
}

TEST(PixelPrecisionRecall, MatchesConfusionCounts) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<BinaryMask> pred;
    std::vector<BinaryMask> gt;
    std::int64_t tp = 0, fp = 0, fn = 0;
    std::vector<PixelCounts> per_class;
    for (int k = 0; k < 3; ++k) {
      pred.push_back(oracle::random_mask(rng, 16, 16, 0.3));
      gt.push_back(oracle::random_mask(rng, 16, 16, 0.3));
      std::int64_t ctp = 0, cfp = 0, cfn = 0;
      for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
          const bool p = pred.back().get(x, y);
          const bool g = gt.back().get(x, y);
          ctp += p && g;
          cfp += p && !g;
          cfn += !p && g;
        }
      }
      const PixelCounts c = pixel_counts(pred.back(), gt.back());
      EXPECT_EQ(c.tp, ctp);
      EXPECT_EQ(c.fp, cfp);
      EXPECT_EQ(c.fn, cfn);
      per_class.push_back(c);
      tp += ctp;
      fp += cfp;
      fn += cfn;
    }
    const auto micro = pixel_precision_recall(pred, gt);
    EXPECT_DOUBLE_EQ(micro.precision.value(), static_cast<double>(tp) / (tp + fp));
    EXPECT_DOUBLE_EQ(micro.recall.value(), static_cast<double>(tp) / (tp + fn));
    const auto macro = macro_precision_recall(per_class);
    double mp = 0.0;
    for (const auto& c : per_class) mp += static_cast<double>(c.tp) / (c.tp + c.fp) / 3.0;
    EXPECT_NEAR(macro.precision.value(), mp, 1e-12);
  }
}

TEST(ErrorModes, TrivialCases) {
  const std::vector<GroundTruth> gts{{0, {4, 4, 16, 16}, 0}};
  EXPECT_EQ(error_mode({0, {4, 4, 16, 16}, 0, 1.0}, gts), 1);
  EXPECT_EQ(error_mode({0, {6, 6, 10, 10}, 0, 1.0}, gts), 2);
  EXPECT_EQ(error_mode({0, {0, 0, 24, 24}, 0, 1.0}, gts), 3);
  EXPECT_EQ(error_mode({0, {0, 0, 6, 6}, 0, 1.0}, gts), 4);
  EXPECT_EQ(error_mode({0, {18, 18, 22, 22}, 0, 1.0}, gts), 5);
  // Wrong class or image: no gt to compare with.
  EXPECT_EQ(error_mode({0, {4, 4, 16, 16}, 1, 1.0}, gts), 5);
  EXPECT_EQ(error_mode({1, {4, 4, 16, 16}, 0, 1.0}, gts), 5);
}

TEST(ErrorModes, MatchOracleAndHistogramIsTotal) {
  Rng rng(5);
  for (int t = 0; t < 300; ++t) {
    const Scene s = random_scene(rng, 3, 5);
    for (const auto& d : s.dets) EXPECT_EQ(error_mode(d, s.gts), oracle::error_mode(d, s.gts));
    const ErrorModeHistogram h = error_modes(s.dets, s.gts, 2, 0.3);
    for (int cls = 0; cls < 2; ++cls) {
      std::int64_t above = 0;
      for (const auto& d : s.dets) above += d.cls == cls && d.score >= 0.3;
      EXPECT_EQ(h.total(cls), above);
      const auto f = h.frequencies(cls);
      ASSERT_EQ(f.has_value(), above > 0);
      if (f) {
        double sum = 0.0;
        for (double v : *f) sum += v;
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
    }
  }
}

MetricsBundle sample_bundle() {
  MetricsBundle m;
  m.classes.push_back({0, 0.123456789012345678, 0.5, 0.25, std::nullopt,
                       std::array<double, kErrorModes>{0.1, 0.2, 0.3, 0.15, 0.25}});
  m.classes.push_back({1, std::nullopt, 1.0 / 3.0, 0.7, 0.9, std::nullopt});
  m.classes.push_back({2, 0.9, 0.8, std::nullopt, std::nullopt, std::nullopt});
  m.map = 0.5117283945061728;
  m.mean_corloc = 0.61;
  m.det_pixels = {0.8, 0.3};
  m.det_pixels_macro = {0.75, std::nullopt};
  m.seg_pixels = {0.4, 0.95};
  m.mean_modes = std::array<double, kErrorModes>{0.1, 0.2, 0.3, 0.15, 0.25};
  m.images = 17;
  m.detections = 42;
  return m;
}

TEST(Report, JsonRoundTripIsExact) {
  const MetricsBundle m = sample_bundle();
  const nlohmann::json j = metrics_json(m);
  const MetricsBundle back = metrics_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(metrics_json(back), j);
  EXPECT_EQ(back.classes[0].ap, m.classes[0].ap);
  EXPECT_EQ(back.classes[1].corloc, m.classes[1].corloc);
  EXPECT_FALSE(back.classes[1].ap.has_value());
  EXPECT_EQ(back.map, m.map);
  EXPECT_EQ(back.seg_pixels.recall, m.seg_pixels.recall);
  EXPECT_EQ(back.images, 17u);
}

TEST(Report, CsvHasOneRowPerClassPlusMean) {
  const std::string csv = metrics_csv(sample_bundle());
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 1u + 3u + 1u);
  EXPECT_EQ(lines[0], "class,ap,corloc,pix_precision,pix_recall,mode1,mode2,mode3,mode4,mode5");
  EXPECT_EQ(lines.back().rfind("mean,", 0), 0u);
  for (const auto& l : lines) EXPECT_EQ(std::count(l.begin(), l.end(), ','), 9);
}

TEST(Report, EmptyBundleWritesValidFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "sdcn_eval_test_empty";
  std::filesystem::remove_all(dir);
  write_report(MetricsBundle{}, dir);
  for (const char* f : {"report.csv", "report.json", "error_modes.svg"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  std::ifstream j(dir / "report.json");
  const auto parsed = nlohmann::json::parse(j);
  EXPECT_TRUE(metrics_from_json(parsed).classes.empty());
  std::filesystem::remove_all(dir);

  const auto blocker = std::filesystem::temp_directory_path() / "sdcn_eval_test_file";
  std::ofstream(blocker) << "x";
  EXPECT_THROW(write_report(MetricsBundle{}, blocker / "sub"), std::exception);
  std::filesystem::remove(blocker);
}

TEST(DetectionsJsonl, RoundTrip) {
  Rng rng(6);
  const Scene s = random_scene(rng, 4, 3);
  const auto back = parse_detections_jsonl(detections_jsonl(s.dets));
  ASSERT_EQ(back.size(), s.dets.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].image_id, s.dets[i].image_id);
    EXPECT_EQ(back[i].box, s.dets[i].box);
    EXPECT_EQ(back[i].cls, s.dets[i].cls);
    EXPECT_EQ(back[i].score, s.dets[i].score);
  }
  EXPECT_THROW(parse_detections_jsonl("{\"image_id\": 1}\n"), std::exception);
}

}  // namespace
}  // namespace sdcn
