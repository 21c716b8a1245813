#pragma once

#include <span>
#include <vector>

#include "darthkit/image.hpp"

namespace darthkit {

/// Axis-aligned box in continuous pixel coordinates, half-open [x1,x2)x[y1,y2).
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  int class_id = 0;
  double confidence = 1.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept {
    return (x2 > x1 && y2 > y1) ? (x2 - x1) * (y2 - y1) : 0.0;
  }
  double center_x() const noexcept { return 0.5 * (x1 + x2); }
  double center_y() const noexcept { return 0.5 * (y1 + y2); }
  /// Zero-area boxes are produced when warping clips a box away entirely.
  bool degenerate() const noexcept { return !(x2 > x1 && y2 > y1); }
  bool valid() const noexcept;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

using Detection = BoundingBox;

/// Geometric view transform, applied as scale -> horizontal flip -> crop.
///
/// `src_width`/`src_height` describe the frame the warp consumes; the flip
/// axis is the scaled source width, not the cropped output width.
struct WarpRecord {
  double scale_x = 1.0;
  double scale_y = 1.0;
  bool flip_h = false;
  int crop_offset_x = 0;
  int crop_offset_y = 0;
  int out_width = 0;
  int out_height = 0;
  int src_width = 0;
  int src_height = 0;

  static WarpRecord identity(int width, int height);
  double scaled_width() const noexcept { return src_width * scale_x; }
  double scaled_height() const noexcept { return src_height * scale_y; }
  bool is_identity() const noexcept;

  friend bool operator==(const WarpRecord&, const WarpRecord&) = default;
};

enum class Interpolation { kBilinear, kNearest };

double iou(const BoundingBox& a, const BoundingBox& b) noexcept;

/// Maps a box from the warp's source frame into its output frame, clipped to
/// the output. Boxes falling fully outside come back degenerate.
BoundingBox warp_box(const BoundingBox& box, const WarpRecord& warp) noexcept;

/// Maps a box from the warp's output frame back into its source frame.
BoundingBox inverse_warp_box(const BoundingBox& box, const WarpRecord& warp) noexcept;

/// Warps every box and drops the ones clipped away.
std::vector<BoundingBox> warp_boxes(std::span<const BoundingBox> boxes, const WarpRecord& warp);

Image warp_image(const Image& img, const WarpRecord& warp,
                 Interpolation interp = Interpolation::kBilinear);

BoundingBox clip_box(const BoundingBox& box, double width, double height) noexcept;

/// Greedy non-maximum suppression. Returns kept indices in descending score
/// order; ties keep the lower index first.
std::vector<int> nms(std::span<const BoundingBox> boxes, double iou_threshold,
                     int max_keep = -1);

}  // namespace darthkit
