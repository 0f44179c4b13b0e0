#ifndef SDCN_EVALUATE_HPP_
#define SDCN_EVALUATE_HPP_

#include <span>
#include <vector>

#include "sdcn/eval.hpp"
#include "sdcn/model.hpp"

// Runs a trained model over labelled images and fills a MetricsBundle.
namespace sdcn {

struct EvalOptions {
  InferOptions infer;
  bool eleven_point = false;
  double seg_thresh = 0.5;  // binarisation of the segmentation maps
  // Score the segmentation branch; off for models trained without it.
  bool segmentation = true;
};

struct EvalOutput {
  MetricsBundle metrics;
  std::vector<Detection> detections;
};

std::vector<GroundTruth> ground_truth(std::span<const SyntheticSample> samples);

// Detection masks use the same detections that are scored for AP. Error
// modes are counted on the top detection of every (image, class) pair with
// ground truth, as for CorLoc.
EvalOutput evaluate_model(Model& model, std::span<const SyntheticSample> samples,
                          const EvalOptions& options);

}  // namespace sdcn

#endif  // SDCN_EVALUATE_HPP_
