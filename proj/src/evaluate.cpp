#include "sdcn/evaluate.hpp"

namespace sdcn {

std::vector<GroundTruth> ground_truth(std::span<const SyntheticSample> samples) {
  std::vector<GroundTruth> gts;
  for (const auto& s : samples) {
    for (const auto& o : s.objects) gts.push_back({s.index, o.box, o.cls});
  }
  return gts;
}

EvalOutput evaluate_model(Model& model, std::span<const SyntheticSample> samples,
                          const EvalOptions& options) {
  const int n = model.net.num_classes;
  EvalOutput out;
  std::vector<PixelCounts> det_counts(static_cast<std::size_t>(n));
  std::vector<PixelCounts> seg_counts(static_cast<std::size_t>(n));
  for (const auto& s : samples) {
    const Tensor image = network_input(s);
    const auto dets = infer(model, image, options.infer, s.index);
    const auto det_masks = boxes_to_segmap(dets, n, s.width, s.height,
                                           options.infer.score_thresh);
    for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
      det_counts[k] += pixel_counts(det_masks[k], s.masks[k]);
    }
    if (options.segmentation) {
      const auto seg_masks = predict_segmentation(model, image, options.seg_thresh);
      for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
        seg_counts[k] += pixel_counts(seg_masks[k], s.masks[k]);
      }
    }
    out.detections.insert(out.detections.end(), dets.begin(), dets.end());
  }
  const auto gts = ground_truth(samples);
  const auto tops = top_detections(out.detections, gts);
  const ErrorModeHistogram modes = error_modes(tops, gts, n, 0.0);

  MetricsBundle& m = out.metrics;
  std::vector<std::optional<double>> aps;
  std::vector<std::optional<double>> corlocs;
  PixelCounts det_total;
  PixelCounts seg_total;
  for (int k = 0; k < n; ++k) {
    ClassMetrics c;
    c.cls = k;
    c.ap = average_precision(out.detections, gts, k, 0.5, options.eleven_point);
    c.corloc = corloc(out.detections, gts, k);
    c.pix_precision = det_counts[static_cast<std::size_t>(k)].precision();
    c.pix_recall = det_counts[static_cast<std::size_t>(k)].recall();
    c.modes = modes.frequencies(k);
    aps.push_back(c.ap);
    corlocs.push_back(c.corloc);
    det_total += det_counts[static_cast<std::size_t>(k)];
    seg_total += seg_counts[static_cast<std::size_t>(k)];
    m.classes.push_back(c);
  }
  m.map = mean_of(aps);
  m.mean_corloc = mean_of(corlocs);
  m.det_pixels = {det_total.precision(), det_total.recall()};
  if (options.segmentation) {
    m.seg_pixels = {seg_total.precision(), seg_total.recall()};
    m.seg_pixels_macro = macro_precision_recall(seg_counts);
  }
  m.det_pixels_macro = macro_precision_recall(det_counts);
  m.mean_modes = modes.mean_frequencies();
  m.images = samples.size();
  m.detections = out.detections.size();
  return out;
}

}  // namespace sdcn
