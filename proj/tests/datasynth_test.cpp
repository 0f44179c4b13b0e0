#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sdcn/datasynth.hpp"

namespace sdcn {
namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

TEST(GenerateSample, SameSeedAndIndexGiveIdenticalBytes) {
  SceneSpec spec;
  spec.seed = 7;
  for (int i : {0, 5, 123}) {
    const auto a = generate_sample(spec, i);
    const auto b = generate_sample(spec, i);
    EXPECT_EQ(a.rgb, b.rgb);
    EXPECT_EQ(a.masks, b.masks);
  }
  SceneSpec other = spec;
  other.seed = 8;
  EXPECT_NE(generate_sample(spec, 0).rgb, generate_sample(other, 0).rgb);
  EXPECT_NE(generate_sample(spec, 0).rgb, generate_sample(spec, 1).rgb);
}

TEST(GenerateSample, SingleObjectGivesOneHotLabels) {
  SceneSpec spec;
  spec.min_objects = 1;
  spec.max_objects = 1;
  for (int i = 0; i < 30; ++i) {
    const auto s = generate_sample(spec, i);
    ASSERT_EQ(s.objects.size(), 1u);
    double total = 0.0;
    for (double v : s.labels.values()) total += v;
    EXPECT_EQ(total, 1.0);
    EXPECT_EQ(s.labels[static_cast<std::size_t>(s.objects[0].cls)], 1.0);
  }
}

TEST(GenerateSample, LabelsBoxesMasksAndPartsAreConsistent) {
  SceneSpec spec;
  spec.seed = 3;
  for (int i = 0; i < 100; ++i) {
    const auto s = generate_sample(spec, i);
    ASSERT_EQ(s.rgb.size(), static_cast<std::size_t>(3 * s.width * s.height));
    ASSERT_EQ(s.masks.size(), static_cast<std::size_t>(spec.num_classes));
    for (int k = 0; k < spec.num_classes; ++k) {
      bool present = false;
      for (const auto& o : s.objects) present = present || o.cls == k;
      EXPECT_EQ(s.labels[static_cast<std::size_t>(k)], present ? 1.0 : 0.0);
      EXPECT_EQ(s.masks[k].count() > 0, present);
      // Mask pixels lie in some box of the class.
      for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
          if (!s.masks[k].get(x, y)) continue;
          bool covered = false;
          for (const auto& o : s.objects) covered = covered || (o.cls == k && o.box.contains(x, y));
          EXPECT_TRUE(covered) << "sample " << i << " class " << k;
        }
      }
    }
    for (const auto& o : s.objects) {
      EXPECT_TRUE(o.box.fits(s.width, s.height));
      // Part inside the body shape, body box tight around it.
      for (int y = o.part.y0; y < o.part.y1; ++y) {
        for (int x = o.part.x0; x < o.part.x1; ++x) {
          EXPECT_TRUE(s.masks[o.cls].get(x, y)) << "part pixel outside body";
          EXPECT_TRUE(o.box.contains(x, y));
        }
      }
      // Boxes are disjoint, so the body is the class mask inside the box.
      std::int64_t body = 0;
      for (int y = o.box.y0; y < o.box.y1; ++y) {
        for (int x = o.box.x0; x < o.box.x1; ++x) body += s.masks[o.cls].get(x, y);
      }
      EXPECT_GE(static_cast<double>(o.part.area()), spec.min_part_ratio * static_cast<double>(body));
    }
    for (std::size_t a = 0; a < s.objects.size(); ++a) {
      for (std::size_t b = a + 1; b < s.objects.size(); ++b) {
        EXPECT_LE(box_iou(s.objects[a].box, s.objects[b].box), spec.max_overlap_iou);
      }
    }
  }
}

TEST(GenerateSample, ClassesAreBalanced) {
  SceneSpec spec;
  std::vector<int> counts(static_cast<std::size_t>(spec.num_classes), 0);
  int objects = 0;
  for (int i = 0; i < 600; ++i) {
    for (const auto& o : generate_sample(spec, i).objects) {
      ++counts[static_cast<std::size_t>(o.cls)];
      ++objects;
    }
  }
  const double uniform = static_cast<double>(objects) / spec.num_classes;
  for (int c : counts) {
    EXPECT_GT(c, 0.8 * uniform);
    EXPECT_LT(c, 1.2 * uniform);
  }
}

// Mean colour of a crop.
Rgb crop_mean(const SyntheticSample& s, const BBox& b) {
  Rgb m{0, 0, 0};
  for (int y = b.y0; y < b.y1; ++y) {
    for (int x = b.x0; x < b.x1; ++x) {
      for (int c = 0; c < 3; ++c) m[c] += s.rgb[static_cast<std::size_t>(3 * (y * s.width + x) + c)];
    }
  }
  for (double& v : m) v /= static_cast<double>(b.area());
  return m;
}

TEST(GenerateSample, PartCropsAloneIdentifyTheClass) {
  // Nearest class-mean classifier fitted on training part crops.
  SceneSpec spec;
  const int n = spec.num_classes;
  std::vector<Rgb> centroid(static_cast<std::size_t>(n), Rgb{0, 0, 0});
  std::vector<int> seen(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < 300; ++i) {
    const auto s = generate_sample(spec, i);
    for (const auto& o : s.objects) {
      const Rgb m = crop_mean(s, o.part);
      for (int c = 0; c < 3; ++c) centroid[o.cls][c] += m[c];
      ++seen[o.cls];
    }
  }
  for (int k = 0; k < n; ++k) {
    for (double& v : centroid[k]) v /= seen[k];
  }
  int right = 0;
  int total = 0;
  for (int i = 300; i < 500; ++i) {
    const auto s = generate_sample(spec, i);
    for (const auto& o : s.objects) {
      const Rgb m = crop_mean(s, o.part);
      int best = 0;
      double best_d = 1e300;
      for (int k = 0; k < n; ++k) {
        double d = 0.0;
        for (int c = 0; c < 3; ++c) d += (m[c] - centroid[k][c]) * (m[c] - centroid[k][c]);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      right += best == o.cls;
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(right) / total, 0.9);
}

TEST(SceneSpec, ValidationAndJson) {
  SceneSpec bad;
  bad.num_classes = 1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  SceneSpec big;
  big.max_body = 40;
  EXPECT_THROW(big.validate(), std::invalid_argument);
  SceneSpec ratio;
  ratio.min_part_ratio = 0.6;
  EXPECT_THROW(ratio.validate(), std::invalid_argument);

  SceneSpec spec;
  spec.seed = 99;
  spec.max_objects = 3;
  const auto j = spec_to_json(spec);
  EXPECT_EQ(spec_to_json(spec_from_json(j)), j);
  auto extra = j;
  extra["colour"] = 1;
  EXPECT_THROW(spec_from_json(extra), std::exception);
}

TEST(Dataset, SplitsAreDisjointIndexRanges) {
  SceneSpec spec;
  const Dataset d = generate_dataset(spec, 4, 3);
  ASSERT_EQ(d.train.size(), 4u);
  ASSERT_EQ(d.test.size(), 3u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(d.train[i].index, i);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(d.test[i].index, 4 + i);
  EXPECT_EQ(d.test[0].rgb, generate_sample(spec, 4).rgb);
}

TEST(Dataset, SingleSampleManifest) {
  const auto dir = fresh_dir("sdcn_datasynth_single");
  const auto manifest = write_dataset(generate_dataset(SceneSpec{}, 1, 0), dir);
  std::ifstream in(manifest);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("images").size(), 1u);
  std::filesystem::remove_all(dir);
}

TEST(Dataset, RoundTripAndRegenerationAreByteIdentical) {
  SceneSpec spec;
  spec.seed = 11;
  const Dataset d = generate_dataset(spec, 5, 3);
  const auto dir_a = fresh_dir("sdcn_datasynth_a");
  const auto dir_b = fresh_dir("sdcn_datasynth_b");
  const auto ma = write_dataset(d, dir_a);
  const Dataset loaded = load_dataset(ma);
  ASSERT_EQ(loaded.train.size(), 5u);
  ASSERT_EQ(loaded.test.size(), 3u);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    EXPECT_EQ(loaded.train[i].rgb, d.train[i].rgb);
    EXPECT_EQ(loaded.train[i].masks, d.train[i].masks);
    EXPECT_EQ(loaded.train[i].objects.size(), d.train[i].objects.size());
    for (std::size_t k = 0; k < d.train[i].labels.size(); ++k) {
      EXPECT_EQ(loaded.train[i].labels[k], d.train[i].labels[k]);
    }
  }
  // Regenerate from the spec recorded in the manifest alone.
  const Dataset again = generate_dataset(loaded.spec, 5, 3);
  const auto mb = write_dataset(again, dir_b);
  EXPECT_EQ(dataset_digest(ma), dataset_digest(mb));
  for (std::size_t i = 0; i < d.test.size(); ++i) EXPECT_EQ(again.test[i].rgb, d.test[i].rgb);

  // Any changed byte changes the digest.
  const std::string before = dataset_digest(ma);
  std::filesystem::path png;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir_a / "images")) {
    png = e.path();
    break;
  }
  {
    std::fstream f(png, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put('\x7f');
  }
  EXPECT_NE(dataset_digest(ma), before);
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST(Png, RoundTripAndSha256) {
  const auto dir = fresh_dir("sdcn_png");
  std::filesystem::create_directories(dir);
  std::vector<std::uint8_t> px(5 * 3 * 3);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i * 7);
  write_png(dir / "a.png", 5, 3, 3, px);
  int w = 0;
  int h = 0;
  EXPECT_EQ(read_png(dir / "a.png", 3, &w, &h), px);
  EXPECT_EQ(w, 5);
  EXPECT_EQ(h, 3);
  EXPECT_EQ(sha256_hex({'a', 'b', 'c'}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace sdcn
