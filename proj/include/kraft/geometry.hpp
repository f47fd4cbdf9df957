// Planar geometry used by the world: convex polygons, signed distances,
// containment and separating-axis overlap tests.

#ifndef KRAFT_GEOMETRY_HPP_
#define KRAFT_GEOMETRY_HPP_

#include <cmath>
#include <vector>

namespace kraft {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  [[nodiscard]] double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  [[nodiscard]] double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  [[nodiscard]] double norm() const { return std::hypot(x, y); }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Rect {
  Vec2 min;
  Vec2 max;

  [[nodiscard]] bool contains(const Vec2& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

// Convex polygon, vertices stored counter-clockwise.
class Polygon {
 public:
  Polygon() = default;
  // Reorders clockwise input to counter-clockwise. Throws
  // std::invalid_argument when the outline has fewer than three vertices,
  // zero area or is not convex.
  explicit Polygon(std::vector<Vec2> vertices);

  [[nodiscard]] const std::vector<Vec2>& vertices() const { return vertices_; }
  [[nodiscard]] const Rect& bounding_box() const { return bbox_; }
  [[nodiscard]] bool contains(const Vec2& p) const;
  // Euclidean distance to the boundary; negative inside.
  [[nodiscard]] double signed_distance(const Vec2& p) const;
  // Closest boundary point to p.
  [[nodiscard]] Vec2 closest_point(const Vec2& p) const;
  [[nodiscard]] Polygon translated(const Vec2& offset) const;
  [[nodiscard]] Vec2 centroid() const;

  friend bool operator==(const Polygon& a, const Polygon& b) {
    return a.vertices_ == b.vertices_;
  }

 private:
  std::vector<Vec2> vertices_;
  Rect bbox_;
};

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);
Vec2 closest_point_on_segment(const Vec2& p, const Vec2& a, const Vec2& b);

// Separating-axis test; touching counts as overlap.
bool polygons_overlap(const Polygon& a, const Polygon& b);

}  // namespace kraft

#endif  // KRAFT_GEOMETRY_HPP_
