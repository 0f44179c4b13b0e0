#include "sdcn/datasynth.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <stdexcept>

#include "sdcn/rng.hpp"

namespace sdcn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const Rgb kPalette[] = {
    {0.95, 0.15, 0.15}, {0.15, 0.90, 0.15}, {0.15, 0.25, 0.95},
    {0.95, 0.90, 0.10}, {0.90, 0.15, 0.90}, {0.10, 0.90, 0.90},
    {0.98, 0.98, 0.98}, {0.02, 0.02, 0.02},
};

constexpr int kMaxClasses = 8;  // mask PNGs hold one bit per class

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

BinaryMask body_mask(int width, int height, const BBox& box, bool ellipse) {
  BinaryMask m(width, height);
  if (!ellipse) {
    m.fill_box(box);
    return m;
  }
  const double cx = 0.5 * (box.x0 + box.x1);
  const double cy = 0.5 * (box.y0 + box.y1);
  const double rx = 0.5 * box.width();
  const double ry = 0.5 * box.height();
  for (int y = box.y0; y < box.y1; ++y) {
    for (int x = box.x0; x < box.x1; ++x) {
      const double dx = (x + 0.5 - cx) / rx;
      const double dy = (y + 0.5 - cy) / ry;
      if (dx * dx + dy * dy <= 1.0) m.set(x, y);
    }
  }
  return m;
}

bool box_inside_mask(const BinaryMask& m, const BBox& b) {
  for (int y = b.y0; y < b.y1; ++y) {
    for (int x = b.x0; x < b.x1; ++x) {
      if (!m.get(x, y)) return false;
    }
  }
  return true;
}

json rgb_json(const Rgb& c) { return json::array({c[0], c[1], c[2]}); }

Rgb rgb_from(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw std::invalid_argument("colour must be an array of 3 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string index_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.png", index);
  return buf;
}

}  // namespace

std::vector<ClassAppearance> default_appearance(int num_classes) {
  if (num_classes < 1 || num_classes > kMaxClasses) {
    throw std::invalid_argument("default_appearance: class count out of range");
  }
  std::vector<ClassAppearance> out;
  for (int k = 0; k < num_classes; ++k) {
    ClassAppearance a;
    a.part = kPalette[k];
    const double mean = (a.part[0] + a.part[1] + a.part[2]) / 3.0;
    for (int c = 0; c < 3; ++c) a.body[c] = 0.25 * (a.part[c] - mean);
    a.ellipse = k % 2 == 0;
    out.push_back(a);
  }
  return out;
}

void SceneSpec::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("scene spec: " + msg);
  };
  if (num_classes < 2 || num_classes > kMaxClasses) {
    fail("num_classes must be in [2, 8]");
  }
  if (!classes.empty() && static_cast<int>(classes.size()) != num_classes) {
    fail("classes must list one appearance per class");
  }
  if (min_objects < 1 || max_objects < min_objects) fail("bad object count range");
  if (min_body < 2 || max_body < min_body) fail("bad body size range");
  if (max_body > width || max_body > height) fail("bodies do not fit the image");
  if (min_part < 1 || max_part < min_part || max_part >= min_body) {
    fail("bad part size range");
  }
  if (!(min_part_ratio > 0.0 && min_part_ratio <= 0.5)) {
    fail("min_part_ratio must be in (0, 0.5]");
  }
  if (static_cast<double>(max_part) * max_part <
      min_part_ratio * static_cast<double>(min_body) * min_body) {
    // The largest part has to reach the ratio on the smallest body.
    fail("part sizes cannot reach min_part_ratio");
  }
  if (max_overlap_iou < 0.0 || max_overlap_iou >= 1.0) {
    fail("max_overlap_iou must be in [0, 1)");
  }
  if (background_noise < 0.0 || body_noise < 0.0) fail("negative noise");
  if (placement_retries < 1) fail("placement_retries must be positive");
}

ClassAppearance SceneSpec::appearance(int cls) const {
  if (!classes.empty()) return classes.at(static_cast<std::size_t>(cls));
  return default_appearance(num_classes).at(static_cast<std::size_t>(cls));
}

Tensor SyntheticSample::image() const {
  const auto h = static_cast<std::size_t>(height);
  const auto w = static_cast<std::size_t>(width);
  Tensor t({3, h, w}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < h * w; ++p) {
      t[c * h * w + p] = rgb[p * 3 + c] / 255.0;
    }
  }
  return t;
}

SyntheticSample generate_sample(const SceneSpec& spec, int index) {
  if (index < 0) throw std::invalid_argument("generate_sample: negative index");
  spec.validate();
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(index)));
  const int w = spec.width;
  const int h = spec.height;

  SyntheticSample s;
  s.index = index;
  s.width = w;
  s.height = h;
  s.labels = Tensor({static_cast<std::size_t>(spec.num_classes)}, 0.0);
  s.masks.assign(spec.num_classes, BinaryMask(w, h));

  struct Placed {
    GtObject obj;
    BinaryMask body;
  };
  const int count = rng.uniform_int(spec.min_objects, spec.max_objects);
  std::vector<int> classes;
  for (int o = 0; o < count; ++o) {
    classes.push_back(rng.uniform_int(0, spec.num_classes - 1));
  }

  // Tries to add one object of class cls; a handful of draws per call.
  auto try_place = [&](std::vector<Placed>& placed, int cls) {
    const ClassAppearance look = spec.appearance(cls);
    for (int attempt = 0; attempt < 16; ++attempt) {
      const int bw = rng.uniform_int(spec.min_body, spec.max_body);
      const int bh = rng.uniform_int(spec.min_body, spec.max_body);
      const int x0 = rng.uniform_int(0, w - bw);
      const int y0 = rng.uniform_int(0, h - bh);
      const int ps = rng.uniform_int(spec.min_part, spec.max_part);
      BinaryMask body = body_mask(w, h, BBox{x0, y0, x0 + bw, y0 + bh}, look.ellipse);
      const BBox tight = body.bounds();
      if (!tight.valid() || tight.width() < ps || tight.height() < ps) continue;
      if (static_cast<double>(ps) * ps <
          spec.min_part_ratio * static_cast<double>(body.count())) {
        continue;
      }
      bool clash = false;
      for (const auto& p : placed) {
        const double iou = box_iou(tight, p.obj.box);
        if (spec.max_overlap_iou == 0.0 ? iou > 0.0 : iou > spec.max_overlap_iou) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      const int px = rng.uniform_int(tight.x0, tight.x1 - ps);
      const int py = rng.uniform_int(tight.y0, tight.y1 - ps);
      const BBox part{px, py, px + ps, py + ps};
      if (!box_inside_mask(body, part)) continue;
      placed.push_back({GtObject{cls, tight, part}, std::move(body)});
      return true;
    }
    return false;
  };

  // Whole layouts are redrawn when a later object does not fit.
  std::vector<Placed> placed;
  bool ok = false;
  for (int layout = 0; layout < spec.placement_retries && !ok; ++layout) {
    placed.clear();
    ok = true;
    for (int cls : classes) {
      if (!try_place(placed, cls)) {
        ok = false;
        break;
      }
    }
  }
  if (!ok) {
    throw std::runtime_error("generate_sample: could not place " +
                             std::to_string(count) + " objects in image " +
                             std::to_string(index));
  }

  // Render: noisy grey background, tinted bodies, solid parts.
  std::vector<double> px(static_cast<std::size_t>(w) * h * 3);
  for (auto& v : px) v = spec.background + rng.normal(0.0, spec.background_noise);
  for (const auto& p : placed) {
    const ClassAppearance look = spec.appearance(p.obj.cls);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!p.body.get(x, y)) continue;
        const std::size_t base = (static_cast<std::size_t>(y) * w + x) * 3;
        const bool in_part = p.obj.part.contains(x, y);
        for (int c = 0; c < 3; ++c) {
          const double noise = rng.normal(0.0, spec.body_noise);
          px[base + c] = in_part ? look.part[c] + noise
                                 : px[base + c] + look.body[c] + noise;
        }
      }
    }
    s.labels[static_cast<std::size_t>(p.obj.cls)] = 1.0;
    auto& m = s.masks[static_cast<std::size_t>(p.obj.cls)];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (p.body.get(x, y)) m.set(x, y);
      }
    }
    s.objects.push_back(p.obj);
  }
  s.rgb.resize(px.size());
  std::transform(px.begin(), px.end(), s.rgb.begin(), quantize);
  return s;
}

std::string split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Dataset generate_dataset(const SceneSpec& spec, int train, int test) {
  if (train < 0 || test < 0 || train + test < 1) {
    throw std::invalid_argument("generate_dataset: need at least one sample");
  }
  Dataset d;
  d.spec = spec;
  for (int i = 0; i < train; ++i) d.train.push_back(generate_sample(spec, i));
  for (int i = 0; i < test; ++i) d.test.push_back(generate_sample(spec, train + i));
  return d;
}

json spec_to_json(const SceneSpec& spec) {
  json classes = json::array();
  for (const auto& c : spec.classes) {
    classes.push_back({{"body", rgb_json(c.body)},
                       {"part", rgb_json(c.part)},
                       {"ellipse", c.ellipse}});
  }
  return {
      {"width", spec.width},
      {"height", spec.height},
      {"num_classes", spec.num_classes},
      {"classes", classes},
      {"min_objects", spec.min_objects},
      {"max_objects", spec.max_objects},
      {"min_body", spec.min_body},
      {"max_body", spec.max_body},
      {"min_part", spec.min_part},
      {"max_part", spec.max_part},
      {"min_part_ratio", spec.min_part_ratio},
      {"max_overlap_iou", spec.max_overlap_iou},
      {"background", spec.background},
      {"background_noise", spec.background_noise},
      {"body_noise", spec.body_noise},
      {"placement_retries", spec.placement_retries},
      {"seed", spec.seed},
  };
}

SceneSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("scene spec must be an object");
  SceneSpec s;
  static const std::set<std::string> known = {
      "width", "height", "num_classes", "classes", "min_objects",
      "max_objects", "min_body", "max_body", "min_part", "max_part",
      "min_part_ratio", "max_overlap_iou", "background", "background_noise",
      "body_noise", "placement_retries", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw std::invalid_argument("scene spec: unknown key '" + key + "'");
    }
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("width", s.width);
  get("height", s.height);
  get("num_classes", s.num_classes);
  get("min_objects", s.min_objects);
  get("max_objects", s.max_objects);
  get("min_body", s.min_body);
  get("max_body", s.max_body);
  get("min_part", s.min_part);
  get("max_part", s.max_part);
  get("min_part_ratio", s.min_part_ratio);
  get("max_overlap_iou", s.max_overlap_iou);
  get("background", s.background);
  get("background_noise", s.background_noise);
  get("body_noise", s.body_noise);
  get("placement_retries", s.placement_retries);
  get("seed", s.seed);
  if (j.contains("classes")) {
    for (const auto& c : j.at("classes")) {
      for (const auto& [key, value] : c.items()) {
        if (key != "body" && key != "part" && key != "ellipse") {
          throw std::invalid_argument("scene spec: unknown class key '" + key + "'");
        }
      }
      ClassAppearance a;
      a.body = rgb_from(c.at("body"));
      a.part = rgb_from(c.at("part"));
      a.ellipse = c.value("ellipse", true);
      s.classes.push_back(a);
    }
  }
  s.validate();
  return s;
}

void write_png(const fs::path& path, int width, int height, int channels,
               const std::vector<std::uint8_t>& pixels) {
  if (channels != 1 && channels != 3) {
    throw std::invalid_argument("write_png: channels must be 1 or 3");
  }
  if (pixels.size() != static_cast<std::size_t>(width) * height * channels) {
    throw std::invalid_argument("write_png: pixel buffer size mismatch");
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw std::runtime_error("write_png: " + path.string() + ": " + img.message);
  }
}

std::vector<std::uint8_t> read_png(const fs::path& path, int channels,
                                   int* width, int* height) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw std::runtime_error("read_png: " + path.string() + ": " + img.message);
  }
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    throw std::runtime_error("read_png: " + path.string() + ": " + img.message);
  }
  *width = static_cast<int>(img.width);
  *height = static_cast<int>(img.height);
  return buf;
}

fs::path write_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  json images = json::array();
  auto emit = [&](const SyntheticSample& s, Split split) {
    const std::string name = index_name(s.index);
    write_png(dir / "images" / name, s.width, s.height, 3, s.rgb);
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(s.width) * s.height, 0);
    for (std::size_t k = 0; k < s.masks.size(); ++k) {
      const auto m = s.masks[k].bits();
      for (std::size_t p = 0; p < bits.size(); ++p) {
        if (m[p]) bits[p] |= static_cast<std::uint8_t>(1u << k);
      }
    }
    write_png(dir / "masks" / name, s.width, s.height, 1, bits);
    json boxes = json::array();
    for (const auto& o : s.objects) {
      boxes.push_back({{"class", o.cls},
                       {"x0", o.box.x0}, {"y0", o.box.y0},
                       {"x1", o.box.x1}, {"y1", o.box.y1},
                       {"part", {o.part.x0, o.part.y0, o.part.x1, o.part.y1}}});
    }
    std::vector<int> labels;
    for (double v : s.labels.values()) labels.push_back(v > 0.5 ? 1 : 0);
    images.push_back({{"index", s.index},
                      {"path", "images/" + name},
                      {"mask_path", "masks/" + name},
                      {"labels", labels},
                      {"boxes", boxes},
                      {"split", split_name(split)}});
  };
  for (const auto& s : data.train) emit(s, Split::kTrain);
  for (const auto& s : data.test) emit(s, Split::kTest);
  const json manifest = {
      {"version", 1},
      {"images", images},
      {"spec", spec_to_json(data.spec)},
      {"seed", data.spec.seed},
      {"split", {{"train", data.train.size()}, {"test", data.test.size()}}},
  };
  const fs::path path = dir / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << manifest.dump(1) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path.string());
  return path;
}

Dataset load_dataset(const fs::path& manifest_path) {
  const auto bytes = read_bytes(manifest_path);
  const json manifest = json::parse(bytes.begin(), bytes.end());
  const fs::path root = manifest_path.parent_path();
  Dataset d;
  d.spec = spec_from_json(manifest.at("spec"));
  for (const auto& e : manifest.at("images")) {
    SyntheticSample s;
    s.index = e.at("index").get<int>();
    s.rgb = read_png(root / e.at("path").get<std::string>(), 3, &s.width, &s.height);
    int mw = 0;
    int mh = 0;
    const auto bits =
        read_png(root / e.at("mask_path").get<std::string>(), 1, &mw, &mh);
    if (mw != s.width || mh != s.height) {
      throw std::runtime_error("mask size differs from image " + std::to_string(s.index));
    }
    const auto labels = e.at("labels").get<std::vector<int>>();
    if (static_cast<int>(labels.size()) != d.spec.num_classes) {
      throw std::runtime_error("label vector length mismatch in manifest");
    }
    s.labels = Tensor({labels.size()}, 0.0);
    for (std::size_t k = 0; k < labels.size(); ++k) s.labels[k] = labels[k];
    for (const auto& b : e.at("boxes")) {
      GtObject o;
      o.cls = b.at("class").get<int>();
      o.box = {b.at("x0").get<int>(), b.at("y0").get<int>(),
               b.at("x1").get<int>(), b.at("y1").get<int>()};
      const auto part = b.at("part").get<std::vector<int>>();
      o.part = {part.at(0), part.at(1), part.at(2), part.at(3)};
      s.objects.push_back(o);
    }
    s.masks.assign(labels.size(), BinaryMask(s.width, s.height));
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        const std::uint8_t v = bits[static_cast<std::size_t>(y) * s.width + x];
        for (std::size_t k = 0; k < labels.size(); ++k) {
          if (v & (1u << k)) s.masks[k].set(x, y);
        }
      }
    }
    const std::string split = e.at("split").get<std::string>();
    if (split == "train") {
      d.train.push_back(std::move(s));
    } else if (split == "test") {
      d.test.push_back(std::move(s));
    } else {
      throw std::runtime_error("unknown split '" + split + "' in manifest");
    }
  }
  return d;
}

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr)) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string dataset_digest(const fs::path& manifest_path) {
  std::vector<std::uint8_t> all = read_bytes(manifest_path);
  const json manifest = json::parse(all.begin(), all.end());
  const fs::path root = manifest_path.parent_path();
  for (const auto& e : manifest.at("images")) {
    for (const char* key : {"path", "mask_path"}) {
      const auto b = read_bytes(root / e.at(key).get<std::string>());
      all.insert(all.end(), b.begin(), b.end());
    }
  }
  return sha256_hex(all);
}

}  // namespace sdcn
