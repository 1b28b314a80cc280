#pragma once

#include "eitml/mesh.hpp"

#include <array>
#include <span>
#include <vector>

namespace eitml::detail {

double orient2d(const Point& a, const Point& b, const Point& c);

/// Positive when d lies strictly inside the circumcircle of the
/// counterclockwise triangle (a, b, c).
double incircle(const Point& a, const Point& b, const Point& c, const Point& d);

/// Bowyer-Watson triangulation of the convex hull of `points`. Returned
/// triangles are counterclockwise and index into `points`.
std::vector<std::array<int, 3>> delaunay_triangulate(std::span<const Point> points);

}  // namespace eitml::detail
