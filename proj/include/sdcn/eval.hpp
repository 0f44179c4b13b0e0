#ifndef SDCN_EVAL_HPP_
#define SDCN_EVAL_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdcn/detection.hpp"
#include "sdcn/geometry.hpp"

// Detection and segmentation metrics: VOC-style AP, CorLoc, pixel
// precision/recall of masks, and the five-way localisation error modes.
namespace sdcn {

struct GroundTruth {
  int image_id = 0;
  BBox box;
  int cls = 0;
};

// Detections of cls sorted by descending score (stable), each matched to the
// highest-IoU ground truth of its image; a match needs IoU >= iou_thresh and
// an unclaimed ground truth, otherwise the detection is a false positive.
// Area under the interpolated precision envelope over all recall points, or
// the 11-point VOC07 variant. Empty when cls has no ground truth.
std::optional<double> average_precision(std::span<const Detection> dets,
                                        std::span<const GroundTruth> gts, int cls,
                                        double iou_thresh = 0.5,
                                        bool eleven_point = false);

// Mean over classes with a defined AP; empty when none is defined.
std::optional<double> mean_of(std::span<const std::optional<double>> values);

// Per image containing cls: does its top-scoring detection of cls reach
// IoU >= iou_thresh with some ground truth of cls? Images without any
// detection of cls count as misses. Empty when no image contains cls.
std::optional<double> corloc(std::span<const Detection> dets,
                             std::span<const GroundTruth> gts, int cls,
                             double iou_thresh = 0.5);

// Highest-scoring detection per (image, class) pair that has ground truth;
// ties keep the earlier detection.
std::vector<Detection> top_detections(std::span<const Detection> dets,
                                      std::span<const GroundTruth> gts);

// Union of the boxes of each class scoring >= score_thresh; one mask per
// class. Boxes are clipped to the image.
std::vector<BinaryMask> boxes_to_segmap(std::span<const Detection> dets,
                                        int num_classes, int width, int height,
                                        double score_thresh);

struct PixelCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  PixelCounts& operator+=(const PixelCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  std::optional<double> precision() const;  // empty when nothing predicted
  std::optional<double> recall() const;     // empty when nothing to find
};

PixelCounts pixel_counts(const BinaryMask& pred, const BinaryMask& gt);

struct PrecisionRecall {
  std::optional<double> precision;
  std::optional<double> recall;
};

// Micro average: counts pooled over every class before dividing.
PrecisionRecall pixel_precision_recall(std::span<const BinaryMask> pred,
                                       std::span<const BinaryMask> gt);
// Macro average: per-class values averaged over the classes where defined.
PrecisionRecall macro_precision_recall(std::span<const PixelCounts> per_class);

inline constexpr int kErrorModes = 5;

// 1 correct (IoU >= 0.5), 2 hypothesis inside gt, 3 gt inside hypothesis,
// 4 other overlap, 5 no overlap; checked in that order against the
// best-IoU ground truth of the detection's class and image.
int error_mode(const Detection& det, std::span<const GroundTruth> gts,
               double iou_thresh = 0.5);

struct ErrorModeHistogram {
  int num_classes = 0;
  std::vector<std::array<std::int64_t, kErrorModes>> counts;  // per class

  std::int64_t total(int cls) const;
  // Frequencies for one class; empty when the class has no detections.
  std::optional<std::array<double, kErrorModes>> frequencies(int cls) const;
  // Frequencies averaged over classes that have detections.
  std::optional<std::array<double, kErrorModes>> mean_frequencies() const;
};

// Every detection scoring >= score_thresh gets exactly one mode.
ErrorModeHistogram error_modes(std::span<const Detection> dets,
                               std::span<const GroundTruth> gts, int num_classes,
                               double score_thresh);

struct ClassMetrics {
  int cls = 0;
  std::optional<double> ap;
  std::optional<double> corloc;
  std::optional<double> pix_precision;
  std::optional<double> pix_recall;
  std::optional<std::array<double, kErrorModes>> modes;
};

struct MetricsBundle {
  std::vector<ClassMetrics> classes;
  std::optional<double> map;
  std::optional<double> mean_corloc;
  PrecisionRecall det_pixels;        // detection-as-mask, micro
  PrecisionRecall det_pixels_macro;
  PrecisionRecall seg_pixels;        // segmentation branch, micro
  PrecisionRecall seg_pixels_macro;
  std::optional<std::array<double, kErrorModes>> mean_modes;
  std::size_t images = 0;
  std::size_t detections = 0;
};

// CSV: class, ap, corloc, pix_precision, pix_recall, mode1..mode5; one row
// per class and a final "mean" row. Undefined values are empty cells.
std::string metrics_csv(const MetricsBundle& m);
nlohmann::json metrics_json(const MetricsBundle& m);
MetricsBundle metrics_from_json(const nlohmann::json& j);
// Stacked bars of the per-class error-mode frequencies.
std::string error_mode_svg(const MetricsBundle& m);

// Writes report.csv, report.json and error_modes.svg under dir.
void write_report(const MetricsBundle& m, const std::filesystem::path& dir);

// Detection lines: {"image_id","class","x0","y0","x1","y1","score"}.
std::string detections_jsonl(std::span<const Detection> dets);
std::vector<Detection> parse_detections_jsonl(const std::string& text);

}  // namespace sdcn

#endif  // SDCN_EVAL_HPP_
