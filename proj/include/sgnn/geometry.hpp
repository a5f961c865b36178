#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace sgnn {

// Axis-aligned box in normalized image coordinates: origin top-left,
// x grows rightward, y grows downward.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept { return width() * height(); }
  double center_x() const noexcept { return 0.5 * (x_min + x_max); }
  double center_y() const noexcept { return 0.5 * (y_min + y_max); }

  bool valid() const noexcept {
    auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
    return in_unit(x_min) && in_unit(y_min) && in_unit(x_max) && in_unit(y_max) &&
           x_min <= x_max && y_min <= y_max;
  }

  // Reorders each axis to min/max and clamps into [0,1].
  static BoundingBox normalized(double x0, double y0, double x1, double y1) noexcept {
    auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
    return {clamp01(std::min(x0, x1)), clamp01(std::min(y0, y1)),
            clamp01(std::max(x0, x1)), clamp01(std::max(y0, y1))};
  }

  bool operator==(const BoundingBox&) const = default;
};

inline constexpr double kSizeRatioCap = 1e6;

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

// |A∩B| / |A∪B|, or 0 when the union is empty.
inline double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// Spatial relation from box i (first argument) to box j (second argument).
struct PairGeometry {
  double dx = 0.0;
  double dy = 0.0;
  double distance = 0.0;
  double angle_deg = 0.0;  // (-180, 180], y-down image convention
  double iou = 0.0;
  double size_ratio = 1.0;  // area_j / area_i, kSizeRatioCap when area_i == 0

  std::array<double, 6> as_array() const noexcept {
    return {dx, dy, distance, angle_deg, iou, size_ratio};
  }
};

inline double angle_degrees(double dy, double dx) noexcept {
  if (dx == 0.0 && dy == 0.0) return 0.0;
  double deg = std::atan2(dy, dx) * (180.0 / std::numbers::pi);
  if (deg <= -180.0) deg += 360.0;
  return deg;
}

inline double size_ratio(const BoundingBox& from, const BoundingBox& to) noexcept {
  const double denom = from.area();
  if (denom <= 0.0) return kSizeRatioCap;
  return to.area() / denom;
}

inline PairGeometry pairwise_geometry(const BoundingBox& a, const BoundingBox& b) noexcept {
  PairGeometry g;
  g.dx = b.center_x() - a.center_x();
  g.dy = b.center_y() - a.center_y();
  g.distance = std::sqrt(g.dx * g.dx + g.dy * g.dy);
  g.angle_deg = angle_degrees(g.dy, g.dx);
  g.iou = iou(a, b);
  g.size_ratio = size_ratio(a, b);
  return g;
}

}  // namespace sgnn
