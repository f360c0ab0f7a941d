#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace bdt {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

/// Axis-aligned bounding box in corner form (x1, y1, x2, y2).
/// Gaussian densities act on the raw 4-vector; geometry helpers below
/// tolerate degenerate corners (empty area) so sampled boxes are safe.
struct Box {
    Vec4 v{0.0, 0.0, 0.0, 0.0};

    Box() = default;
    explicit Box(const Vec4& coords) : v(coords) {}
    Box(double x1, double y1, double x2, double y2) : v(x1, y1, x2, y2) {}

    double x1() const { return v[0]; }
    double y1() const { return v[1]; }
    double x2() const { return v[2]; }
    double y2() const { return v[3]; }

    double width() const { return v[2] - v[0]; }
    double height() const { return v[3] - v[1]; }
    double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }

    bool valid() const {
        return v.allFinite() && v[0] < v[2] && v[1] < v[3];
    }
};

/// Intersection-over-union in [0, 1]. Degenerate boxes score 0.
inline double iou(const Box& a, const Box& b) {
    const double ix = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
    const double iy = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

}  // namespace bdt
