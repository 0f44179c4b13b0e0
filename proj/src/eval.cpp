#include "sdcn/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace sdcn {

using nlohmann::json;

namespace {

// Indices of dets of cls, descending score, stable.
std::vector<std::size_t> ranked(std::span<const Detection> dets, int cls) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].cls == cls) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  return idx;
}

// Best-IoU ground truth of the detection's class and image, or -1.
std::ptrdiff_t best_gt(const Detection& d, std::span<const GroundTruth> gts,
                       double* iou_out) {
  std::ptrdiff_t best = -1;
  double best_iou = -1.0;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gts[g].image_id != d.image_id || gts[g].cls != d.cls) continue;
    const double iou = box_iou(d.box, gts[g].box);
    if (iou > best_iou) {
      best_iou = iou;
      best = static_cast<std::ptrdiff_t>(g);
    }
  }
  *iou_out = best_iou;
  return best;
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json modes_json(const std::optional<std::array<double, kErrorModes>>& m) {
  if (!m) return nullptr;
  return json(*m);
}

std::optional<std::array<double, kErrorModes>> modes_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::array<double, kErrorModes>>();
}

json pr_json(const PrecisionRecall& pr) {
  return {{"precision", opt_json(pr.precision)}, {"recall", opt_json(pr.recall)}};
}

PrecisionRecall pr_from(const json& j) {
  return {opt_from(j.at("precision")), opt_from(j.at("recall"))};
}

}  // namespace

std::optional<double> average_precision(std::span<const Detection> dets,
                                        std::span<const GroundTruth> gts, int cls,
                                        double iou_thresh, bool eleven_point) {
  std::size_t n_gt = 0;
  for (const auto& g : gts) n_gt += g.cls == cls ? 1 : 0;
  if (n_gt == 0) return std::nullopt;

  std::vector<bool> claimed(gts.size(), false);
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i : ranked(dets, cls)) {
    ++seen;
    double iou = 0.0;
    const std::ptrdiff_t g = best_gt(dets[i], gts, &iou);
    if (g >= 0 && iou >= iou_thresh && !claimed[static_cast<std::size_t>(g)]) {
      claimed[static_cast<std::size_t>(g)] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }

  if (eleven_point) {
    double ap = 0.0;
    for (int t = 0; t <= 10; ++t) {
      const double r = t / 10.0;
      double p = 0.0;
      for (std::size_t i = 0; i < recall.size(); ++i) {
        if (recall[i] >= r) p = std::max(p, precision[i]);
      }
      ap += p / 11.0;
    }
    return ap;
  }

  std::vector<double> mrec{0.0};
  std::vector<double> mpre{0.0};
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mpre.insert(mpre.end(), precision.begin(), precision.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i > 0; --i) {
    mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  }
  double ap = 0.0;
  for (std::size_t i = 0; i + 1 < mrec.size(); ++i) {
    if (mrec[i + 1] != mrec[i]) ap += (mrec[i + 1] - mrec[i]) * mpre[i + 1];
  }
  return ap;
}

std::optional<double> mean_of(std::span<const std::optional<double>> values) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::vector<Detection> top_detections(std::span<const Detection> dets,
                                      std::span<const GroundTruth> gts) {
  std::map<std::pair<int, int>, std::size_t> best;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto key = std::make_pair(dets[i].image_id, dets[i].cls);
    auto it = best.find(key);
    if (it == best.end()) {
      best.emplace(key, i);
    } else if (dets[i].score > dets[it->second].score) {
      it->second = i;
    }
  }
  std::vector<Detection> out;
  std::map<std::pair<int, int>, bool> wanted;
  for (const auto& g : gts) wanted[{g.image_id, g.cls}] = true;
  for (const auto& [key, i] : best) {
    if (wanted.count(key)) out.push_back(dets[i]);
  }
  return out;
}

std::optional<double> corloc(std::span<const Detection> dets,
                             std::span<const GroundTruth> gts, int cls,
                             double iou_thresh) {
  std::map<int, bool> images;  // image -> localised
  for (const auto& g : gts) {
    if (g.cls == cls) images[g.image_id] = false;
  }
  if (images.empty()) return std::nullopt;
  for (const auto& d : top_detections(dets, gts)) {
    if (d.cls != cls) continue;
    for (const auto& g : gts) {
      if (g.image_id == d.image_id && g.cls == cls &&
          box_iou(d.box, g.box) >= iou_thresh) {
        images[d.image_id] = true;
      }
    }
  }
  std::size_t hits = 0;
  for (const auto& [image, hit] : images) hits += hit ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

std::vector<BinaryMask> boxes_to_segmap(std::span<const Detection> dets,
                                        int num_classes, int width, int height,
                                        double score_thresh) {
  std::vector<BinaryMask> out(static_cast<std::size_t>(num_classes),
                              BinaryMask(width, height));
  for (const auto& d : dets) {
    if (d.score < score_thresh || d.cls < 0 || d.cls >= num_classes) continue;
    const BBox b{std::max(d.box.x0, 0), std::max(d.box.y0, 0),
                 std::min(d.box.x1, width), std::min(d.box.y1, height)};
    if (b.valid()) out[static_cast<std::size_t>(d.cls)].fill_box(b);
  }
  return out;
}

std::optional<double> PixelCounts::precision() const {
  if (tp + fp == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

std::optional<double> PixelCounts::recall() const {
  if (tp + fn == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

PixelCounts pixel_counts(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    throw std::invalid_argument("pixel_counts: resolution mismatch");
  }
  PixelCounts c;
  const auto p = pred.bits();
  const auto g = gt.bits();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] && g[i]) {
      ++c.tp;
    } else if (p[i]) {
      ++c.fp;
    } else if (g[i]) {
      ++c.fn;
    }
  }
  return c;
}

PrecisionRecall pixel_precision_recall(std::span<const BinaryMask> pred,
                                       std::span<const BinaryMask> gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("pixel_precision_recall: class count mismatch");
  }
  PixelCounts total;
  for (std::size_t k = 0; k < pred.size(); ++k) total += pixel_counts(pred[k], gt[k]);
  return {total.precision(), total.recall()};
}

PrecisionRecall macro_precision_recall(std::span<const PixelCounts> per_class) {
  std::vector<std::optional<double>> p;
  std::vector<std::optional<double>> r;
  for (const auto& c : per_class) {
    p.push_back(c.precision());
    r.push_back(c.recall());
  }
  return {mean_of(p), mean_of(r)};
}

int error_mode(const Detection& det, std::span<const GroundTruth> gts,
               double iou_thresh) {
  double iou = 0.0;
  const std::ptrdiff_t g = best_gt(det, gts, &iou);
  if (g < 0) return 5;
  const BBox& gt = gts[static_cast<std::size_t>(g)].box;
  if (iou >= iou_thresh) return 1;
  if (det.box.inside(gt)) return 2;
  if (gt.inside(det.box)) return 3;
  if (iou > 0.0) return 4;
  return 5;
}

std::int64_t ErrorModeHistogram::total(int cls) const {
  const auto& c = counts.at(static_cast<std::size_t>(cls));
  return std::accumulate(c.begin(), c.end(), std::int64_t{0});
}

std::optional<std::array<double, kErrorModes>> ErrorModeHistogram::frequencies(
    int cls) const {
  const std::int64_t n = total(cls);
  if (n == 0) return std::nullopt;
  std::array<double, kErrorModes> f{};
  for (int m = 0; m < kErrorModes; ++m) {
    f[m] = static_cast<double>(counts[static_cast<std::size_t>(cls)][m]) /
           static_cast<double>(n);
  }
  return f;
}

std::optional<std::array<double, kErrorModes>> ErrorModeHistogram::mean_frequencies()
    const {
  std::array<double, kErrorModes> sum{};
  int n = 0;
  for (int k = 0; k < num_classes; ++k) {
    const auto f = frequencies(k);
    if (!f) continue;
    for (int m = 0; m < kErrorModes; ++m) sum[m] += (*f)[m];
    ++n;
  }
  if (n == 0) return std::nullopt;
  for (auto& v : sum) v /= n;
  return sum;
}

ErrorModeHistogram error_modes(std::span<const Detection> dets,
                               std::span<const GroundTruth> gts, int num_classes,
                               double score_thresh) {
  ErrorModeHistogram h;
  h.num_classes = num_classes;
  h.counts.assign(static_cast<std::size_t>(num_classes), {});
  for (const auto& d : dets) {
    if (d.score < score_thresh) continue;
    if (d.cls < 0 || d.cls >= num_classes) {
      throw std::out_of_range("error_modes: detection class out of range");
    }
    ++h.counts[static_cast<std::size_t>(d.cls)][error_mode(d, gts) - 1];
  }
  return h;
}

std::string metrics_csv(const MetricsBundle& m) {
  std::ostringstream out;
  out << "class,ap,corloc,pix_precision,pix_recall,mode1,mode2,mode3,mode4,mode5\n";
  auto modes = [&](const std::optional<std::array<double, kErrorModes>>& f) {
    for (int i = 0; i < kErrorModes; ++i) {
      out << "," << (f ? cell((*f)[i]) : std::string());
    }
  };
  for (const auto& c : m.classes) {
    out << c.cls << "," << cell(c.ap) << "," << cell(c.corloc) << ","
        << cell(c.pix_precision) << "," << cell(c.pix_recall);
    modes(c.modes);
    out << "\n";
  }
  out << "mean," << cell(m.map) << "," << cell(m.mean_corloc) << ","
      << cell(m.det_pixels.precision) << "," << cell(m.det_pixels.recall);
  modes(m.mean_modes);
  out << "\n";
  return out.str();
}

json metrics_json(const MetricsBundle& m) {
  json classes = json::array();
  for (const auto& c : m.classes) {
    classes.push_back({{"class", c.cls},
                       {"ap", opt_json(c.ap)},
                       {"corloc", opt_json(c.corloc)},
                       {"pix_precision", opt_json(c.pix_precision)},
                       {"pix_recall", opt_json(c.pix_recall)},
                       {"modes", modes_json(c.modes)}});
  }
  return {{"classes", classes},
          {"map", opt_json(m.map)},
          {"mean_corloc", opt_json(m.mean_corloc)},
          {"det_pixels", pr_json(m.det_pixels)},
          {"det_pixels_macro", pr_json(m.det_pixels_macro)},
          {"seg_pixels", pr_json(m.seg_pixels)},
          {"seg_pixels_macro", pr_json(m.seg_pixels_macro)},
          {"mean_modes", modes_json(m.mean_modes)},
          {"images", m.images},
          {"detections", m.detections}};
}

MetricsBundle metrics_from_json(const json& j) {
  MetricsBundle m;
  for (const auto& c : j.at("classes")) {
    ClassMetrics cm;
    cm.cls = c.at("class").get<int>();
    cm.ap = opt_from(c.at("ap"));
    cm.corloc = opt_from(c.at("corloc"));
    cm.pix_precision = opt_from(c.at("pix_precision"));
    cm.pix_recall = opt_from(c.at("pix_recall"));
    cm.modes = modes_from(c.at("modes"));
    m.classes.push_back(cm);
  }
  m.map = opt_from(j.at("map"));
  m.mean_corloc = opt_from(j.at("mean_corloc"));
  m.det_pixels = pr_from(j.at("det_pixels"));
  m.det_pixels_macro = pr_from(j.at("det_pixels_macro"));
  m.seg_pixels = pr_from(j.at("seg_pixels"));
  m.seg_pixels_macro = pr_from(j.at("seg_pixels_macro"));
  m.mean_modes = modes_from(j.at("mean_modes"));
  m.images = j.at("images").get<std::size_t>();
  m.detections = j.at("detections").get<std::size_t>();
  return m;
}

std::string error_mode_svg(const MetricsBundle& m) {
  static const char* kColours[kErrorModes] = {"#1f3f8f", "#e07b39", "#59a14f",
                                              "#b8b8b8", "#c0392b"};
  static const char* kNames[kErrorModes] = {"correct", "inside gt", "contains gt",
                                            "low overlap", "no overlap"};
  const int bar_w = 300;
  const int row_h = 22;
  const int left = 60;
  const int rows = static_cast<int>(m.classes.size()) + 1;
  const int height = 30 + rows * row_h + 30;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + bar_w + 20
      << "\" height=\"" << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<text x=\"" << left << "\" y=\"16\">error modes per class</text>\n";
  auto bar = [&](int row, const std::string& label,
                 const std::optional<std::array<double, kErrorModes>>& f) {
    const int y = 26 + row * row_h;
    out << "<text x=\"4\" y=\"" << y + 14 << "\">" << label << "</text>\n";
    if (!f) return;
    double x = left;
    for (int i = 0; i < kErrorModes; ++i) {
      const double w = (*f)[i] * bar_w;
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%.2f\" y=\"%d\" width=\"%.2f\" height=\"%d\" fill=\"%s\"/>\n",
                    x, y, w, row_h - 4, kColours[i]);
      out << buf;
      x += w;
    }
  };
  int row = 0;
  for (const auto& c : m.classes) bar(row++, std::to_string(c.cls), c.modes);
  bar(row++, "mean", m.mean_modes);
  const int legend_y = 30 + rows * row_h + 10;
  for (int i = 0; i < kErrorModes; ++i) {
    const int x = 4 + i * 78;
    out << "<rect x=\"" << x << "\" y=\"" << legend_y << "\" width=\"10\" height=\"10\" fill=\""
        << kColours[i] << "\"/>";
    out << "<text x=\"" << x + 13 << "\" y=\"" << legend_y + 9 << "\">" << kNames[i]
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_report(const MetricsBundle& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + (dir / name).string());
  };
  write("report.csv", metrics_csv(m));
  write("report.json", metrics_json(m).dump(2) + "\n");
  write("error_modes.svg", error_mode_svg(m));
}

std::string detections_jsonl(std::span<const Detection> dets) {
  std::string out;
  for (const auto& d : dets) {
    const json j = {{"image_id", d.image_id}, {"class", d.cls},
                    {"x0", d.box.x0},         {"y0", d.box.y0},
                    {"x1", d.box.x1},         {"y1", d.box.y1},
                    {"score", d.score}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<Detection> parse_detections_jsonl(const std::string& text) {
  std::vector<Detection> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    Detection d;
    d.image_id = j.at("image_id").get<int>();
    d.cls = j.at("class").get<int>();
    d.box = {j.at("x0").get<int>(), j.at("y0").get<int>(), j.at("x1").get<int>(),
             j.at("y1").get<int>()};
    d.score = j.at("score").get<double>();
    out.push_back(d);
  }
  return out;
}

}  // namespace sdcn
