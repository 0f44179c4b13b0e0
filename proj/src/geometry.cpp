#include "sdcn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

namespace sdcn {

BinaryMask::BinaryMask(int width, int height)
    : width_(width),
      height_(height),
      bits_(static_cast<std::size_t>(std::max(width, 0)) *
                static_cast<std::size_t>(std::max(height, 0)),
            0) {
  if (width < 0 || height < 0) {
    throw std::invalid_argument("BinaryMask: negative dimensions");
  }
}

void BinaryMask::fill_box(const BBox& box, bool on) {
  const int x0 = std::max(box.x0, 0);
  const int y0 = std::max(box.y0, 0);
  const int x1 = std::min(box.x1, width_);
  const int y1 = std::min(box.y1, height_);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) set(x, y, on);
  }
}

std::int64_t BinaryMask::count() const {
  return std::count(bits_.begin(), bits_.end(), std::uint8_t{1});
}

BBox BinaryMask::bounds() const {
  BBox b{width_, height_, 0, 0};
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (!get(x, y)) continue;
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x + 1);
      b.y1 = std::max(b.y1, y + 1);
    }
  }
  return b;
}

double box_iou(const BBox& a, const BBox& b) {
  const int ix0 = std::max(a.x0, b.x0);
  const int iy0 = std::max(a.y0, b.y0);
  const int ix1 = std::min(a.x1, b.x1);
  const int iy1 = std::min(a.y1, b.y1);
  if (ix0 >= ix1 || iy0 >= iy1) return 0.0;
  const auto inter = static_cast<std::int64_t>(ix1 - ix0) * (iy1 - iy0);
  const auto uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

std::vector<BinaryMask> connected_components(const BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  std::vector<int> labels(static_cast<std::size_t>(w) * h, -1);
  std::vector<int> parent;

  // First pass: provisional labels from the up and left neighbours.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.get(x, y)) continue;
      const int up = y > 0 ? labels[(y - 1) * w + x] : -1;
      const int left = x > 0 ? labels[y * w + x - 1] : -1;
      int label;
      if (up < 0 && left < 0) {
        label = static_cast<int>(parent.size());
        parent.push_back(label);
      } else if (up < 0 || left < 0) {
        label = std::max(up, left);
      } else {
        const int ru = find_root(parent, up);
        const int rl = find_root(parent, left);
        label = std::min(ru, rl);
        parent[std::max(ru, rl)] = label;
      }
      labels[y * w + x] = label;
    }
  }

  // Second pass: resolve equivalences. Roots are always the smallest label
  // of their set, and labels are allocated in row-major order, so numbering
  // roots by first appearance yields the required component order.
  std::vector<int> compact(parent.size(), -1);
  std::vector<BinaryMask> out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int l = labels[y * w + x];
      if (l < 0) continue;
      const int root = find_root(parent, l);
      if (compact[root] < 0) {
        compact[root] = static_cast<int>(out.size());
        out.emplace_back(w, h);
      }
      out[compact[root]].set(x, y);
    }
  }
  return out;
}

double mask_box_iou(const BinaryMask& component, const BBox& box) {
  const auto comp_area = component.count();
  if (comp_area == 0) {
    throw std::invalid_argument("mask_box_iou: empty component");
  }
  const MaskIntegral integral(component);
  const std::int64_t inter = integral.count_in(box);
  const BBox clipped{std::max(box.x0, 0), std::max(box.y0, 0),
                     std::min(box.x1, component.width()),
                     std::min(box.y1, component.height())};
  const std::int64_t box_area = clipped.valid() ? clipped.area() : 0;
  return static_cast<double>(inter) /
         static_cast<double>(comp_area + box_area - inter);
}

MaskIntegral::MaskIntegral(const BinaryMask& mask)
    : width_(mask.width()),
      height_(mask.height()),
      table_(static_cast<std::size_t>(width_ + 1) * (height_ + 1), 0) {
  const int stride = width_ + 1;
  for (int y = 0; y < height_; ++y) {
    std::int64_t row = 0;
    for (int x = 0; x < width_; ++x) {
      row += mask.get(x, y) ? 1 : 0;
      table_[(y + 1) * stride + x + 1] = table_[y * stride + x + 1] + row;
    }
  }
}

std::int64_t MaskIntegral::count_in(const BBox& box) const {
  const int x0 = std::clamp(box.x0, 0, width_);
  const int y0 = std::clamp(box.y0, 0, height_);
  const int x1 = std::clamp(box.x1, 0, width_);
  const int y1 = std::clamp(box.y1, 0, height_);
  if (x0 >= x1 || y0 >= y1) return 0;
  const int stride = width_ + 1;
  return table_[y1 * stride + x1] - table_[y0 * stride + x1] -
         table_[y1 * stride + x0] + table_[y0 * stride + x0];
}

namespace {

// Cells of an n_cells axis whose center pixel falls into [lo, hi).
std::pair<int, int> nearest_cell_range(int lo, int hi, int n_pixels,
                                       int n_cells) {
  int first = n_cells;
  int last = -1;
  for (int q = 0; q < n_cells; ++q) {
    const int pixel = static_cast<int>(
        std::floor((q + 0.5) * n_pixels / static_cast<double>(n_cells)));
    if (pixel >= lo && pixel < hi) {
      first = std::min(first, q);
      last = std::max(last, q);
    }
  }
  if (last < first) {
    const double center = 0.5 * (lo + hi);
    const int q = std::clamp(
        static_cast<int>(std::floor(center * n_cells / n_pixels)), 0,
        n_cells - 1);
    return {q, q + 1};
  }
  return {first, last + 1};
}

}  // namespace

BBox box_to_grid(const BBox& box, int image_w, int image_h, int grid_w,
                 int grid_h) {
  if (grid_w == image_w && grid_h == image_h) return box;
  const auto [x0, x1] = nearest_cell_range(box.x0, box.x1, image_w, grid_w);
  const auto [y0, y1] = nearest_cell_range(box.y0, box.y1, image_h, grid_h);
  return {x0, y0, x1, y1};
}

BBox box_to_feature_cells(const BBox& box, int image_w, int image_h,
                          int grid_w, int grid_h) {
  if (!box.fits(image_w, image_h)) {
    throw std::out_of_range("proposal outside the feature extent");
  }
  // Integer arithmetic: floor(x0 * gw / W) and ceil(x1 * gw / W).
  const auto floor_div = [](long a, long b) { return static_cast<int>(a / b); };
  const auto ceil_div = [](long a, long b) {
    return static_cast<int>((a + b - 1) / b);
  };
  return {floor_div(static_cast<long>(box.x0) * grid_w, image_w),
          floor_div(static_cast<long>(box.y0) * grid_h, image_h),
          ceil_div(static_cast<long>(box.x1) * grid_w, image_w),
          ceil_div(static_cast<long>(box.y1) * grid_h, image_h)};
}

namespace {

std::vector<int> window_positions(int extent, int window, int step) {
  std::vector<int> pos;
  for (int p = 0; p + window <= extent; p += step) pos.push_back(p);
  if (pos.empty() || pos.back() + window < extent) pos.push_back(extent - window);
  return pos;
}

}  // namespace

ProposalSet generate_proposals(int image_w, int image_h,
                               std::span<const double> scales,
                               std::span<const double> aspect_ratios,
                               double stride) {
  if (image_w <= 0 || image_h <= 0) {
    throw std::invalid_argument("generate_proposals: empty image");
  }
  if (scales.empty() || aspect_ratios.empty()) {
    throw std::invalid_argument("generate_proposals: no scales or ratios");
  }
  if (!(stride > 0.0 && stride <= 1.0)) {
    throw std::invalid_argument("generate_proposals: stride outside (0,1]");
  }
  ProposalSet out;
  std::set<std::tuple<int, int, int, int>> seen;
  for (const double scale : scales) {
    for (const double ratio : aspect_ratios) {
      if (!(scale > 0.0) || !(ratio > 0.0)) continue;
      const int bw = std::clamp(
          static_cast<int>(std::lround(scale * std::sqrt(ratio))), 1, image_w);
      const int bh = std::clamp(
          static_cast<int>(std::lround(scale / std::sqrt(ratio))), 1, image_h);
      const int step_x = std::max(1, static_cast<int>(std::lround(bw * stride)));
      const int step_y = std::max(1, static_cast<int>(std::lround(bh * stride)));
      for (const int y : window_positions(image_h, bh, step_y)) {
        for (const int x : window_positions(image_w, bw, step_x)) {
          if (seen.emplace(x, y, x + bw, y + bh).second) {
            out.push_back({x, y, x + bw, y + bh});
          }
        }
      }
    }
  }
  if (out.empty()) {
    throw std::invalid_argument("generate_proposals: zero proposals");
  }
  return out;
}

std::vector<std::size_t> nms(std::span<const BBox> boxes,
                             std::span<const double> scores,
                             double iou_thresh) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("nms: boxes and scores differ in length");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  std::vector<std::size_t> kept;
  for (const std::size_t i : order) {
    bool keep = true;
    for (const std::size_t k : kept) {
      if (box_iou(boxes[i], boxes[k]) > iou_thresh) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

}  // namespace sdcn
