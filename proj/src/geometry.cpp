#include "darthkit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace darthkit {

bool BoundingBox::valid() const noexcept {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
         std::isfinite(y2) && x2 >= x1 && y2 >= y1 && confidence >= 0.0 &&
         confidence <= 1.0;
}

WarpRecord WarpRecord::identity(int width, int height) {
  WarpRecord w;
  w.out_width = w.src_width = width;
  w.out_height = w.src_height = height;
  return w;
}

bool WarpRecord::is_identity() const noexcept {
  return scale_x == 1.0 && scale_y == 1.0 && !flip_h && crop_offset_x == 0 &&
         crop_offset_y == 0 && out_width == src_width && out_height == src_height;
}

double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BoundingBox clip_box(const BoundingBox& box, double width, double height) noexcept {
  BoundingBox out = box;
  out.x1 = std::clamp(box.x1, 0.0, width);
  out.x2 = std::clamp(box.x2, 0.0, width);
  out.y1 = std::clamp(box.y1, 0.0, height);
  out.y2 = std::clamp(box.y2, 0.0, height);
  return out;
}

BoundingBox warp_box(const BoundingBox& box, const WarpRecord& w) noexcept {
  BoundingBox out = box;
  out.x1 = box.x1 * w.scale_x;
  out.x2 = box.x2 * w.scale_x;
  out.y1 = box.y1 * w.scale_y;
  out.y2 = box.y2 * w.scale_y;
  if (w.flip_h) {
    const double sw = w.scaled_width();
    const double nx1 = sw - out.x2;
    const double nx2 = sw - out.x1;
    out.x1 = nx1;
    out.x2 = nx2;
  }
  out.x1 -= w.crop_offset_x;
  out.x2 -= w.crop_offset_x;
  out.y1 -= w.crop_offset_y;
  out.y2 -= w.crop_offset_y;
  out = clip_box(out, w.out_width, w.out_height);
  if (out.degenerate()) {
    out.x2 = out.x1;
    out.y2 = out.y1;
  }
  return out;
}

BoundingBox inverse_warp_box(const BoundingBox& box, const WarpRecord& w) noexcept {
  BoundingBox out = box;
  out.x1 = box.x1 + w.crop_offset_x;
  out.x2 = box.x2 + w.crop_offset_x;
  out.y1 = box.y1 + w.crop_offset_y;
  out.y2 = box.y2 + w.crop_offset_y;
  if (w.flip_h) {
    const double sw = w.scaled_width();
    const double nx1 = sw - out.x2;
    const double nx2 = sw - out.x1;
    out.x1 = nx1;
    out.x2 = nx2;
  }
  out.x1 /= w.scale_x;
  out.x2 /= w.scale_x;
  out.y1 /= w.scale_y;
  out.y2 /= w.scale_y;
  return clip_box(out, w.src_width, w.src_height);
}

std::vector<BoundingBox> warp_boxes(std::span<const BoundingBox> boxes, const WarpRecord& warp) {
  std::vector<BoundingBox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) {
    auto wb = warp_box(b, warp);
    if (!wb.degenerate()) out.push_back(wb);
  }
  return out;
}

namespace {

double sample_channel(const Image& img, double sx, double sy, int c) {
  // Pixel-centre convention: pixel i covers [i, i+1), centre at i + 0.5.
  const double fx = std::clamp(sx - 0.5, 0.0, static_cast<double>(img.width - 1));
  const double fy = std::clamp(sy - 0.5, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double ax = fx - x0;
  const double ay = fy - y0;
  const double top = (1.0 - ax) * img.at(y0, x0, c) + ax * img.at(y0, x1, c);
  const double bot = (1.0 - ax) * img.at(y1, x0, c) + ax * img.at(y1, x1, c);
  return (1.0 - ay) * top + ay * bot;
}

}  // namespace

Image warp_image(const Image& img, const WarpRecord& w, Interpolation interp) {
  Image out(w.out_width, w.out_height, img.channels, 0);
  if (img.empty()) return out;
  const double sw = w.scaled_width();
  const double sh = w.scaled_height();
  for (int oy = 0; oy < w.out_height; ++oy) {
    const double cy = oy + 0.5 + w.crop_offset_y;
    if (cy >= sh + 1e-9) continue;
    const double sy = cy / w.scale_y;
    for (int ox = 0; ox < w.out_width; ++ox) {
      double cx = ox + 0.5 + w.crop_offset_x;
      if (cx >= sw + 1e-9) continue;
      if (w.flip_h) cx = sw - cx;
      const double sx = cx / w.scale_x;
      for (int c = 0; c < img.channels; ++c) {
        std::uint8_t v;
        if (interp == Interpolation::kNearest) {
          const int px = std::clamp(static_cast<int>(std::floor(sx)), 0, img.width - 1);
          const int py = std::clamp(static_cast<int>(std::floor(sy)), 0, img.height - 1);
          v = img.at(py, px, c);
        } else {
          const double s = sample_channel(img, sx, sy, c);
          v = static_cast<std::uint8_t>(std::clamp(std::lround(s), 0L, 255L));
        }
        out.at(oy, ox, c) = v;
      }
    }
  }
  return out;
}

std::vector<int> nms(std::span<const BoundingBox> boxes, double iou_threshold, int max_keep) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return boxes[a].confidence > boxes[b].confidence;
  });
  std::vector<int> keep;
  std::vector<char> removed(boxes.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int idx = order[i];
    if (removed[idx]) continue;
    keep.push_back(idx);
    if (max_keep > 0 && static_cast<int>(keep.size()) >= max_keep) break;
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const int other = order[j];
      if (!removed[other] && iou(boxes[idx], boxes[other]) > iou_threshold) removed[other] = 1;
    }
  }
  return keep;
}

}  // namespace darthkit
