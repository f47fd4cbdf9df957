#include "kraft/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace kraft {

Polygon::Polygon(std::vector<Vec2> vertices) : vertices_(std::move(vertices)) {
  const std::size_t n = vertices_.size();
  if (n < 3) {
    throw std::invalid_argument("polygon needs at least 3 vertices, got " +
                                std::to_string(n));
  }
  double area2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    area2 += vertices_[i].cross(vertices_[(i + 1) % n]);
  }
  if (std::abs(area2) < 1e-12) {
    throw std::invalid_argument("polygon has zero area");
  }
  if (area2 < 0.0) std::reverse(vertices_.begin(), vertices_.end());
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e1 = vertices_[(i + 1) % n] - vertices_[i];
    const Vec2 e2 = vertices_[(i + 2) % n] - vertices_[(i + 1) % n];
    if (e1.cross(e2) < -1e-12) {
      throw std::invalid_argument("polygon is not convex");
    }
  }
  bbox_ = {vertices_.front(), vertices_.front()};
  for (const auto& v : vertices_) {
    bbox_.min = {std::min(bbox_.min.x, v.x), std::min(bbox_.min.y, v.y)};
    bbox_.max = {std::max(bbox_.max.x, v.x), std::max(bbox_.max.y, v.y)};
  }
}

bool Polygon::contains(const Vec2& p) const {
  if (!bbox_.contains(p)) return false;
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 edge = vertices_[(i + 1) % n] - vertices_[i];
    if (edge.cross(p - vertices_[i]) < 0.0) return false;
  }
  return true;
}

Vec2 closest_point_on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  if (len2 == 0.0) return a;
  const double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return a + ab * s;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  return (p - closest_point_on_segment(p, a, b)).norm();
}

Vec2 Polygon::closest_point(const Vec2& p) const {
  const std::size_t n = vertices_.size();
  Vec2 best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 c =
        closest_point_on_segment(p, vertices_[i], vertices_[(i + 1) % n]);
    const double d = (p - c).norm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

double Polygon::signed_distance(const Vec2& p) const {
  const double d = (p - closest_point(p)).norm();
  return contains(p) ? -d : d;
}

Polygon Polygon::translated(const Vec2& offset) const {
  Polygon out = *this;
  for (auto& v : out.vertices_) v += offset;
  out.bbox_.min += offset;
  out.bbox_.max += offset;
  return out;
}

Vec2 Polygon::centroid() const {
  Vec2 sum;
  for (const auto& v : vertices_) sum += v;
  return sum * (1.0 / static_cast<double>(vertices_.size()));
}

namespace {

bool separated_along_edges_of(const Polygon& a, const Polygon& b) {
  const auto& va = a.vertices();
  const std::size_t n = va.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 edge = va[(i + 1) % n] - va[i];
    const Vec2 axis{edge.y, -edge.x};  // outward normal for CCW winding
    double max_a = -std::numeric_limits<double>::infinity();
    for (const auto& v : va) max_a = std::max(max_a, axis.dot(v));
    double min_b = std::numeric_limits<double>::infinity();
    for (const auto& v : b.vertices()) min_b = std::min(min_b, axis.dot(v));
    if (min_b > max_a) return true;
  }
  return false;
}

}  // namespace

bool polygons_overlap(const Polygon& a, const Polygon& b) {
  const Rect& ra = a.bounding_box();
  const Rect& rb = b.bounding_box();
  if (ra.max.x < rb.min.x || rb.max.x < ra.min.x || ra.max.y < rb.min.y ||
      rb.max.y < ra.min.y) {
    return false;
  }
  return !separated_along_edges_of(a, b) && !separated_along_edges_of(b, a);
}

}  // namespace kraft
