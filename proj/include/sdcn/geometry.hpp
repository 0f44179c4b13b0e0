#ifndef SDCN_GEOMETRY_HPP_
#define SDCN_GEOMETRY_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sdcn {

// Axis-aligned pixel box, half-open: covers columns [x0, x1) and rows [y0, y1).
struct BBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  std::int64_t area() const {
    return static_cast<std::int64_t>(width()) * height();
  }
  bool valid() const { return x0 < x1 && y0 < y1; }
  bool contains(int x, int y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
  bool inside(const BBox& outer) const {
    return x0 >= outer.x0 && y0 >= outer.y0 && x1 <= outer.x1 &&
           y1 <= outer.y1;
  }
  bool fits(int image_w, int image_h) const {
    return valid() && x0 >= 0 && y0 >= 0 && x1 <= image_w && y1 <= image_h;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

// h x w grid of booleans stored row-major.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty_grid() const { return width_ == 0 || height_ == 0; }

  bool get(int x, int y) const {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool on = true) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0;
  }
  void fill_box(const BBox& box, bool on = true);

  std::int64_t count() const;
  std::span<const std::uint8_t> bits() const { return bits_; }

  // Tight bounding box of the set pixels; invalid box when empty.
  BBox bounds() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

using ProposalSet = std::vector<BBox>;

double box_iou(const BBox& a, const BBox& b);

// 4-connected components, ordered by their first pixel in row-major order.
std::vector<BinaryMask> connected_components(const BinaryMask& mask);

// |component ∩ box| / |component ∪ box|, box in the component's frame.
// Throws std::invalid_argument for an empty component.
double mask_box_iou(const BinaryMask& component, const BBox& box);

// Summed-area table over a mask for O(1) box pixel counts.
class MaskIntegral {
 public:
  explicit MaskIntegral(const BinaryMask& mask);
  std::int64_t count_in(const BBox& box) const;
  std::int64_t total() const { return count_in({0, 0, width_, height_}); }

 private:
  int width_;
  int height_;
  std::vector<std::int64_t> table_;
};

// Maps an image-space box onto a coarser (or equal) grid with nearest-pixel
// sampling: grid cell (q, p) is covered when the image pixel under its center
// lies inside the box. Boxes smaller than a cell keep the cell holding their
// center, so the result is never empty.
BBox box_to_grid(const BBox& box, int image_w, int image_h, int grid_w,
                 int grid_h);

// Same mapping for feature maps: the smallest grid rectangle whose cells
// intersect the box. Throws std::out_of_range when the box leaves the image.
BBox box_to_feature_cells(const BBox& box, int image_w, int image_h,
                          int grid_w, int grid_h);

// Sliding-window grid: scale-major, then aspect ratio, then row-major
// positions. Each window is clipped to the image; the last row/column of
// positions is aligned with the image border. Exact duplicates are dropped
// keeping the first occurrence.
ProposalSet generate_proposals(int image_w, int image_h,
                               std::span<const double> scales,
                               std::span<const double> aspect_ratios,
                               double stride);

// Greedy suppression in descending score order (ties: lower index first).
// A box is suppressed when its IoU with a kept box exceeds iou_thresh.
// Returns kept indices in selection order.
std::vector<std::size_t> nms(std::span<const BBox> boxes,
                             std::span<const double> scores,
                             double iou_thresh);

}  // namespace sdcn

#endif  // SDCN_GEOMETRY_HPP_
