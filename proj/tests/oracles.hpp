#ifndef SDCN_TESTS_ORACLES_HPP_
#define SDCN_TESTS_ORACLES_HPP_

#include <cstddef>
#include <optional>
#include <vector>

#include "sdcn/collaboration.hpp"
#include "sdcn/detection.hpp"
#include "sdcn/eval.hpp"
#include "sdcn/geometry.hpp"
#include "sdcn/rng.hpp"
#include "sdcn/tensor.hpp"

// Slow reference implementations written straight from the definitions,
// plus random instance generators. None of them calls the code under test.
namespace oracle {

using sdcn::BBox;
using sdcn::BinaryMask;
using sdcn::Rng;
using sdcn::Tensor;

// Random valid box inside w x h.
BBox random_box(Rng& rng, int w, int h);
// Each pixel set with probability p.
BinaryMask random_mask(Rng& rng, int w, int h, double p);
// A few random filled rectangles.
BinaryMask random_blobs(Rng& rng, int w, int h, int count);

// Rasterise both boxes on a grid that holds them and count.
double box_iou(const BBox& a, const BBox& b);

double mask_box_iou(const BinaryMask& m, const BBox& box);

// Label image from an explicit-stack flood fill with 4-neighbours; 0 is
// background, components numbered from 1 in row-major discovery order.
std::vector<int> flood_fill_labels(const BinaryMask& m, int* count);

// Keep a box unless some already kept box overlaps it by more than thresh,
// scanning by descending score then index.
std::vector<std::size_t> nms(const std::vector<BBox>& boxes,
                             const std::vector<double>& scores, double thresh);

// Grid cells whose centre pixel lies in the box; the cell under the box
// centre when none does.
BinaryMask grid_cells(const BBox& box, int image_w, int image_h, int grid_w,
                      int grid_h);

// Precision/recall at every rank of the score-sorted list, then the area
// under the right-to-left running maximum of precision.
std::optional<double> average_precision(const std::vector<sdcn::Detection>& dets,
                                        const std::vector<sdcn::GroundTruth>& gts,
                                        int cls, double iou_thresh = 0.5);

Tensor dseg(const Tensor& seg, const std::vector<BBox>& proposals,
            const sdcn::MapFrame& frame, const Tensor& labels, double tau0,
            double bin_thresh);

Tensor sdet(const Tensor& det_scores, const std::vector<BBox>& proposals,
            const sdcn::MapFrame& frame, const Tensor& labels);

// Labels per pixel: argmax channel if the pixel ranks within the budget of
// its channel by (value desc, index asc), otherwise ignore.
std::vector<int> psi(const Tensor& sdet, double keep_fraction);

// Every candidate assignment tried, the rules checked for each.
sdcn::PseudoLabels kappa(const Tensor& scores, const Tensor& labels,
                         const std::vector<BBox>& proposals, double iou_thresh);

// Mode 1-5 by the stated precedence against the best-IoU gt of the class.
int error_mode(const sdcn::Detection& d, const std::vector<sdcn::GroundTruth>& gts);

}  // namespace oracle

#endif  // SDCN_TESTS_ORACLES_HPP_
