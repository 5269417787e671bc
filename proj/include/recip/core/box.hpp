#pragma once

#include <algorithm>
#include <cmath>

namespace recip {

/// Axis-aligned box in continuous pixel coordinates. Pixel column i covers
/// [i, i + 1), so a box over columns 2..9 has x = 2, w = 8.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return std::max(0.0, w) * std::max(0.0, h); }

  friend bool operator==(const Box&, const Box&) = default;
};

inline Box box_from_corners(double x0, double y0, double x1, double y1) {
  return Box{x0, y0, x1 - x0, y1 - y0};
}

inline double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Clips to [0, width) x [0, height). Result may have zero size.
inline Box clip_box(const Box& b, double width, double height) {
  const double x0 = std::clamp(b.x, 0.0, width);
  const double y0 = std::clamp(b.y, 0.0, height);
  const double x1 = std::clamp(b.right(), 0.0, width);
  const double y1 = std::clamp(b.bottom(), 0.0, height);
  return box_from_corners(x0, y0, std::max(x0, x1), std::max(y0, y1));
}

}  // namespace recip
