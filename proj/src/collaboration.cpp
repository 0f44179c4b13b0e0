#include "sdcn/collaboration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sdcn/ops.hpp"

namespace sdcn {

BinaryMask binarize(const Tensor& seg, std::size_t channel, double thresh) {
  if (seg.rank() != 3 || channel >= seg.dim(0)) {
    throw std::invalid_argument("binarize: bad channel for " +
                                shape_string(seg.shape()));
  }
  const int h = static_cast<int>(seg.dim(1));
  const int w = static_cast<int>(seg.dim(2));
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (seg.at(channel, y, x) > thresh) m.set(x, y);
    }
  }
  return m;
}

std::vector<double> dseg_column(std::span<const BinaryMask> components,
                                std::span<const BBox> map_boxes, double tau0) {
  std::vector<double> col(map_boxes.size(), tau0);
  if (components.empty()) return col;
  std::vector<double> best(map_boxes.size(), 0.0);
  for (const auto& comp : components) {
    const MaskIntegral integral(comp);
    const std::int64_t comp_area = integral.total();
    const int w = comp.width();
    const int h = comp.height();
    for (std::size_t i = 0; i < map_boxes.size(); ++i) {
      const BBox& b = map_boxes[i];
      const BBox clipped{std::max(b.x0, 0), std::max(b.y0, 0),
                         std::min(b.x1, w), std::min(b.y1, h)};
      const std::int64_t box_area = clipped.valid() ? clipped.area() : 0;
      const std::int64_t inter = integral.count_in(b);
      const double iou = static_cast<double>(inter) /
                         static_cast<double>(comp_area + box_area - inter);
      best[i] = std::max(best[i], iou);
    }
  }
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = best[i] + tau0;
  return col;
}

Tensor build_dseg(const Tensor& seg, std::span<const BBox> proposals,
                  const MapFrame& frame, const Tensor& labels,
                  const DsegOptions& options) {
  const std::size_t n = labels.size();
  if (seg.rank() != 3 || seg.dim(0) != n + 1 ||
      seg.dim(1) != static_cast<std::size_t>(frame.map_h) ||
      seg.dim(2) != static_cast<std::size_t>(frame.map_w)) {
    throw std::invalid_argument("build_dseg: segmentation map " +
                                shape_string(seg.shape()) +
                                " does not match the frame");
  }
  std::vector<BBox> map_boxes;
  map_boxes.reserve(proposals.size());
  for (const auto& b : proposals) map_boxes.push_back(frame.to_map(b));

  Tensor out({proposals.size(), n}, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] <= 0.5) continue;
    const auto comps =
        connected_components(binarize(seg, k, options.bin_thresh));
    const auto col = dseg_column(comps, map_boxes, options.tau0);
    const double mx = *std::max_element(col.begin(), col.end());
    for (std::size_t i = 0; i < col.size(); ++i) out.at(i, k) = col[i] / mx;
  }
  return out;
}

Var reweight(const Var& midn, const Tensor& dseg) {
  if (midn.shape() != dseg.shape()) {
    throw std::invalid_argument("reweight: D^m " + shape_string(midn.shape()) +
                                " vs D^seg " + shape_string(dseg.shape()));
  }
  return mul(midn, Var::constant(dseg));
}

Tensor build_sdet(const Tensor& det_scores, std::span<const BBox> proposals,
                  const MapFrame& frame, const Tensor& labels) {
  const std::size_t n = labels.size();
  if (det_scores.rank() != 2 || det_scores.dim(0) != proposals.size() ||
      det_scores.dim(1) < n) {
    throw std::invalid_argument("build_sdet: scores " +
                                shape_string(det_scores.shape()) +
                                " incompatible with proposals/labels");
  }
  const int h = frame.map_h;
  const int w = frame.map_w;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out({n + 1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)},
             0.0);
  std::vector<BBox> map_boxes;
  map_boxes.reserve(proposals.size());
  for (const auto& b : proposals) map_boxes.push_back(frame.to_map(b));

  const int stride = w + 1;
  std::vector<double> diff(static_cast<std::size_t>(stride) * (h + 1));
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] <= 0.5) continue;
    // Corner deltas, then a 2-D prefix sum, give the per-pixel sums.
    std::fill(diff.begin(), diff.end(), 0.0);
    for (std::size_t i = 0; i < map_boxes.size(); ++i) {
      const BBox& b = map_boxes[i];
      const double v = det_scores.at(i, k);
      diff[b.y0 * stride + b.x0] += v;
      diff[b.y0 * stride + b.x1] -= v;
      diff[b.y1 * stride + b.x0] -= v;
      diff[b.y1 * stride + b.x1] += v;
    }
    double* ch = out.data() + k * plane;
    std::vector<double> col(w, 0.0);
    double peak = 0.0;
    for (int y = 0; y < h; ++y) {
      double row = 0.0;
      for (int x = 0; x < w; ++x) {
        row += diff[y * stride + x];
        col[x] += row;
        ch[y * w + x] = col[x];
        peak = std::max(peak, col[x]);
      }
    }
    if (peak > 0.0) {
      for (std::size_t p = 0; p < plane; ++p) ch[p] /= peak;
    } else {
      std::fill(ch, ch + plane, 0.0);
    }
  }
  double* bg = out.data() + n * plane;
  for (std::size_t p = 0; p < plane; ++p) {
    double mx = 0.0;
    for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, out[k * plane + p]);
    bg[p] = 1.0 - mx;
  }
  return out;
}

std::size_t PixelLabels::count(int label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

PixelLabels psi_labels(const Tensor& sdet, double keep_fraction) {
  if (sdet.rank() != 3) {
    throw std::invalid_argument("psi_labels: expected (N+1) x h x w heatmap");
  }
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw std::invalid_argument("psi_labels: keep fraction outside (0,1]");
  }
  const std::size_t channels = sdet.dim(0);
  const std::size_t plane = sdet.dim(1) * sdet.dim(2);
  PixelLabels out;
  out.height = static_cast<int>(sdet.dim(1));
  out.width = static_cast<int>(sdet.dim(2));
  out.labels.assign(plane, kIgnoreLabel);

  std::vector<std::vector<std::size_t>> claimed(channels);
  for (std::size_t p = 0; p < plane; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < channels; ++c) {
      if (sdet[c * plane + p] > sdet[best * plane + p]) best = c;
    }
    claimed[best].push_back(p);
  }
  const auto budget = static_cast<std::size_t>(
      std::floor(keep_fraction * static_cast<double>(plane)));
  for (std::size_t c = 0; c < channels; ++c) {
    auto& pix = claimed[c];
    if (pix.empty()) continue;
    const std::size_t keep = std::min(pix.size(), std::max<std::size_t>(budget, 1));
    std::stable_sort(pix.begin(), pix.end(), [&](std::size_t a, std::size_t b) {
      return sdet[c * plane + a] > sdet[c * plane + b];
    });
    for (std::size_t i = 0; i < keep; ++i) {
      out.labels[pix[i]] = static_cast<int>(c);
    }
  }
  return out;
}

Var seg_from_det_loss(const Var& seg_logits, const PixelLabels& labels) {
  return channel_cross_entropy(seg_logits, labels.labels);
}

Var total_objective(const ObjectiveTerms& terms, const ObjectiveWeights& w) {
  const std::array<Var, 4> parts{terms.seg_branch, terms.seg_from_det,
                                 terms.mil, terms.refine};
  const std::array<double, 4> weights{1.0, w.lambda_seg, w.lambda_mil,
                                      w.lambda_ref};
  return weighted_sum(parts, weights);
}

double total_objective(double mil, double refine, double seg_branch,
                       double seg_from_det, const ObjectiveWeights& w) {
  return seg_branch + w.lambda_seg * seg_from_det + w.lambda_mil * mil +
         w.lambda_ref * refine;
}

}  // namespace sdcn
