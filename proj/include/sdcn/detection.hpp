#ifndef SDCN_DETECTION_HPP_
#define SDCN_DETECTION_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "sdcn/autograd.hpp"
#include "sdcn/geometry.hpp"
#include "sdcn/tensor.hpp"

// Multiple-instance detection branch: two-stream proposal scoring, pseudo
// label conversion, and three cascaded refinement classifiers.
namespace sdcn {

inline constexpr std::size_t kRefineHeads = 3;

// One scored box produced at test time.
struct Detection {
  int image_id = 0;
  BBox box;
  int cls = 0;
  double score = 0.0;
};

struct MidnWeights {
  Var cls_weight;  // C x N
  Var cls_bias;    // N
  Var sel_weight;  // C x N
  Var sel_bias;    // N
};

struct RefineWeights {
  std::array<Var, kRefineHeads> weight;  // C x (N+1)
  std::array<Var, kRefineHeads> bias;    // N+1
};

// Maps proposals onto the feature grid and mean-pools every box: B x C.
// With context > 0 each box is also grown by that fraction of its size on
// every side (clipped to the image) and the output is B x 2C: the box mean
// followed by box mean minus the mean of the surrounding ring. The contrast
// is zero when the grown box adds no cells.
// Throws std::out_of_range for a proposal outside the image.
Var pool_proposals(const Var& features, std::span<const BBox> proposals,
                   int image_w, int image_h, double context = 0.0);

// Box grown by round(context * side) on each side, clipped to the image.
BBox context_box(const BBox& box, int image_w, int image_h, double context);

// D^m (B x N): softmax over classes times softmax over proposals.
Var midn_forward(const Var& pooled, const MidnWeights& weights);

struct RefineScores {
  std::array<Var, kRefineHeads> heads;  // each B x (N+1), rows on the simplex
  Tensor mean;                          // average of the heads
};

RefineScores refine_forward(const Var& pooled, const RefineWeights& weights);

// Sum over classes of BCE(sum_i scores(i, j), y(j)); the image-level score
// is clamped inside bce().
Var mil_loss(const Var& scores, const Tensor& labels);

// One class per proposal; index N is background.
struct PseudoLabels {
  std::vector<std::size_t> labels;
  std::vector<double> weights;
};

// Top-scoring seed per positive class; proposals overlapping a seed with
// IoU >= iou_thresh take its class (conflicts go to the higher seed score,
// then the lower class index), the rest become background. Weights are the
// assigning seed's score; background rows use the largest seed score.
// scores: B x N (extra columns are ignored). Throws when y has no positive.
PseudoLabels kappa_labels(const Tensor& scores, const Tensor& labels,
                          std::span<const BBox> proposals,
                          double iou_thresh = 0.5);

// Supervision for every refinement head: head 1 from the instructor matrix
// (D^m or its re-weighted form), head k from head k-1's foreground columns.
std::array<PseudoLabels, kRefineHeads> refinement_targets(
    const Tensor& instructor, const RefineScores& scores,
    const Tensor& labels, std::span<const BBox> proposals,
    double iou_thresh = 0.5);

// Sum over proposals of weighted CE for one head.
Var refinement_loss(const Var& head_scores, const PseudoLabels& targets);

// Sum over the three heads.
Var refinement_loss(const RefineScores& scores,
                    std::span<const PseudoLabels> targets);

double branch_loss(double mil, double refine, double lambda_mil = 1.0,
                   double lambda_ref = 1.0);
Var branch_loss(const Var& mil, const Var& refine, double lambda_mil = 1.0,
                double lambda_ref = 1.0);

// Columns [0, n) of a B x K matrix.
Tensor leading_columns(const Tensor& m, std::size_t n);

}  // namespace sdcn

#endif  // SDCN_DETECTION_HPP_
