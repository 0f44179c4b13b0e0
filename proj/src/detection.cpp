#include "sdcn/detection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sdcn/losses.hpp"
#include "sdcn/ops.hpp"

namespace sdcn {

BBox context_box(const BBox& box, int image_w, int image_h, double context) {
  const int mx = static_cast<int>(std::lround(context * box.width()));
  const int my = static_cast<int>(std::lround(context * box.height()));
  return {std::max(box.x0 - mx, 0), std::max(box.y0 - my, 0),
          std::min(box.x1 + mx, image_w), std::min(box.y1 + my, image_h)};
}

Var pool_proposals(const Var& features, std::span<const BBox> proposals,
                   int image_w, int image_h, double context) {
  if (features.value().rank() != 3) {
    throw std::invalid_argument("pool_proposals: features must be C x H x W");
  }
  if (proposals.empty()) {
    throw std::invalid_argument("pool_proposals: empty proposal set");
  }
  if (!(context >= 0.0)) {
    throw std::invalid_argument("pool_proposals: context must be non-negative");
  }
  const int grid_h = static_cast<int>(features.shape()[1]);
  const int grid_w = static_cast<int>(features.shape()[2]);
  std::vector<BBox> cells;
  cells.reserve(proposals.size());
  for (const auto& b : proposals) {
    cells.push_back(box_to_feature_cells(b, image_w, image_h, grid_w, grid_h));
  }
  const Var inner = roi_mean_pool(features, cells);
  if (context == 0.0) return inner;

  std::vector<BBox> outer_cells;
  outer_cells.reserve(proposals.size());
  for (const auto& b : proposals) {
    outer_cells.push_back(box_to_feature_cells(context_box(b, image_w, image_h, context),
                                               image_w, image_h, grid_w, grid_h));
  }
  const Var outer = roi_mean_pool(features, outer_cells);
  // inner - ring = A_out / (A_out - A_in) * (inner - outer)
  const std::size_t channels = features.shape()[0];
  Tensor factor({proposals.size(), channels}, 0.0);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto a_in = static_cast<double>(cells[i].area());
    const auto a_out = static_cast<double>(outer_cells[i].area());
    const double f = a_out > a_in ? a_out / (a_out - a_in) : 0.0;
    for (std::size_t c = 0; c < channels; ++c) factor[i * channels + c] = f;
  }
  return concat_columns(inner, mul(sub(inner, outer), Var::constant(factor)));
}

Var midn_forward(const Var& pooled, const MidnWeights& weights) {
  const Var cls = softmax(linear(pooled, weights.cls_weight, weights.cls_bias), 1);
  const Var sel = softmax(linear(pooled, weights.sel_weight, weights.sel_bias), 0);
  return mul(cls, sel);
}

RefineScores refine_forward(const Var& pooled, const RefineWeights& weights) {
  RefineScores out;
  for (std::size_t h = 0; h < kRefineHeads; ++h) {
    out.heads[h] =
        softmax(linear(pooled, weights.weight[h], weights.bias[h]), 1);
  }
  out.mean = Tensor(out.heads[0].shape(), 0.0);
  for (std::size_t i = 0; i < out.mean.size(); ++i) {
    double s = 0.0;
    for (std::size_t h = 0; h < kRefineHeads; ++h) s += out.heads[h].value()[i];
    out.mean[i] = s / static_cast<double>(kRefineHeads);
  }
  return out;
}

Var mil_loss(const Var& scores, const Tensor& labels) {
  if (scores.value().rank() != 2 || scores.shape()[1] != labels.size()) {
    throw std::invalid_argument("mil_loss: scores " +
                                shape_string(scores.shape()) +
                                " do not match labels " +
                                shape_string(labels.shape()));
  }
  return bce(sum_axis(scores, 0), labels);
}

PseudoLabels kappa_labels(const Tensor& scores, const Tensor& labels,
                          std::span<const BBox> proposals, double iou_thresh) {
  if (scores.rank() != 2 || scores.dim(0) != proposals.size() ||
      scores.dim(1) < labels.size()) {
    throw std::invalid_argument("kappa_labels: scores " +
                                shape_string(scores.shape()) +
                                " incompatible with proposals/labels");
  }
  const std::size_t rows = proposals.size();
  const std::size_t n = labels.size();

  struct Seed {
    std::size_t cls;
    std::size_t index;
    double score;
  };
  std::vector<Seed> seeds;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] <= 0.5) continue;
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows; ++i) {
      if (scores.at(i, k) > scores.at(best, k)) best = i;
    }
    seeds.push_back({k, best, scores.at(best, k)});
  }
  if (seeds.empty()) {
    throw std::invalid_argument("kappa_labels: no positive class");
  }
  double max_seed = seeds.front().score;
  for (const auto& s : seeds) max_seed = std::max(max_seed, s.score);

  PseudoLabels out;
  out.labels.assign(rows, n);
  out.weights.assign(rows, max_seed);
  for (std::size_t i = 0; i < rows; ++i) {
    const Seed* owner = nullptr;
    for (const auto& s : seeds) {
      if (box_iou(proposals[i], proposals[s.index]) < iou_thresh) continue;
      // Seeds are visited in increasing class order, so strict comparison
      // keeps the lower class on equal scores.
      if (owner == nullptr || s.score > owner->score) owner = &s;
    }
    if (owner != nullptr) {
      out.labels[i] = owner->cls;
      out.weights[i] = owner->score;
    }
  }
  return out;
}

Tensor leading_columns(const Tensor& m, std::size_t n) {
  if (m.rank() != 2 || m.dim(1) < n) {
    throw std::invalid_argument("leading_columns: bad shape " +
                                shape_string(m.shape()));
  }
  Tensor out({m.dim(0), n}, 0.0);
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = m.at(i, j);
  }
  return out;
}

std::array<PseudoLabels, kRefineHeads> refinement_targets(
    const Tensor& instructor, const RefineScores& scores,
    const Tensor& labels, std::span<const BBox> proposals,
    double iou_thresh) {
  const std::size_t n = labels.size();
  std::array<PseudoLabels, kRefineHeads> out;
  out[0] = kappa_labels(instructor, labels, proposals, iou_thresh);
  for (std::size_t h = 1; h < kRefineHeads; ++h) {
    out[h] = kappa_labels(leading_columns(scores.heads[h - 1].value(), n),
                          labels, proposals, iou_thresh);
  }
  return out;
}

Var refinement_loss(const Var& head_scores, const PseudoLabels& targets) {
  return weighted_ce(head_scores, targets.labels, targets.weights);
}

Var refinement_loss(const RefineScores& scores,
                    std::span<const PseudoLabels> targets) {
  if (targets.size() != kRefineHeads) {
    throw std::invalid_argument("refinement_loss: one target set per head");
  }
  std::vector<Var> terms;
  for (std::size_t h = 0; h < kRefineHeads; ++h) {
    terms.push_back(refinement_loss(scores.heads[h], targets[h]));
  }
  const std::vector<double> ones(kRefineHeads, 1.0);
  return weighted_sum(terms, ones);
}

double branch_loss(double mil, double refine, double lambda_mil,
                   double lambda_ref) {
  return lambda_mil * mil + lambda_ref * refine;
}

Var branch_loss(const Var& mil, const Var& refine, double lambda_mil,
                double lambda_ref) {
  const std::array<Var, 2> terms{mil, refine};
  const std::array<double, 2> w{lambda_mil, lambda_ref};
  return weighted_sum(terms, w);
}

}  // namespace sdcn
