#ifndef SDCN_COLLABORATION_HPP_
#define SDCN_COLLABORATION_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "sdcn/autograd.hpp"
#include "sdcn/geometry.hpp"
#include "sdcn/losses.hpp"
#include "sdcn/tensor.hpp"

// Values exchanged between the two branches inside one training iteration.
// Everything built here is a constant for the backward pass.
namespace sdcn {

// Frame shared by proposals (image pixels) and maps (h x w grid).
struct MapFrame {
  int image_w = 0;
  int image_h = 0;
  int map_w = 0;
  int map_h = 0;

  BBox to_map(const BBox& b) const {
    return box_to_grid(b, image_w, image_h, map_w, map_h);
  }
};

struct DsegOptions {
  double tau0 = 0.5;
  double bin_thresh = 0.5;
};

// Binarized channel: pixels strictly above thresh are set.
BinaryMask binarize(const Tensor& seg, std::size_t channel, double thresh);

// Column k before normalisation: max_j IoU(component_j, b_i) + tau0, or tau0
// everywhere when there is no component.
std::vector<double> dseg_column(std::span<const BinaryMask> components,
                                std::span<const BBox> map_boxes, double tau0);

// D^seg (B x N): per positive class the normalised column above, zero
// columns for absent classes.
Tensor build_dseg(const Tensor& seg, std::span<const BBox> proposals,
                  const MapFrame& frame, const Tensor& labels,
                  const DsegOptions& options = {});

// D^m * D^seg elementwise; D^seg carries no gradient.
Var reweight(const Var& midn, const Tensor& dseg);

// S^det ((N+1) x h x w): positive channels accumulate D(i,k) over the cells
// of each proposal and are max-normalised; negative channels are zero; the
// background channel is 1 - max over foreground channels.
Tensor build_sdet(const Tensor& det_scores, std::span<const BBox> proposals,
                  const MapFrame& frame, const Tensor& labels);

// Per-pixel labels in [0, N] or kIgnoreLabel.
struct PixelLabels {
  int width = 0;
  int height = 0;
  std::vector<int> labels;

  std::size_t count(int label) const;
};

// Per-pixel argmax over channels (ties to the lower channel), then per class
// only the floor(keep_fraction * h * w) highest-valued claimed pixels (at
// least one when any is claimed) keep their label.
PixelLabels psi_labels(const Tensor& sdet, double keep_fraction = 0.10);

// Mean channel-softmax cross entropy over labelled pixels.
Var seg_from_det_loss(const Var& seg_logits, const PixelLabels& labels);

struct ObjectiveWeights {
  double lambda_mil = 1.0;
  double lambda_ref = 1.0;
  double lambda_seg = 0.1;
};

struct ObjectiveTerms {
  Var mil;
  Var refine;
  Var seg_branch;  // L^S, already weighted internally
  Var seg_from_det;
};

// L = L^S + lambda_seg L_seg + lambda_mil L_mil + lambda_ref L_ref, summed
// left to right. Undefined terms and zero weights are skipped.
Var total_objective(const ObjectiveTerms& terms, const ObjectiveWeights& w);
double total_objective(double mil, double refine, double seg_branch,
                       double seg_from_det, const ObjectiveWeights& w);

}  // namespace sdcn

#endif  // SDCN_COLLABORATION_HPP_
