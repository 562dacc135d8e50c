#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "pushgrasp/pose.hpp"

namespace pushgrasp {

/// Simple polygon with counter-clockwise vertex order.
class Polygon2 {
 public:
  Polygon2() = default;

  /// Validates the ring and reorients it to CCW. Throws on fewer than three
  /// vertices, zero area or self-intersection.
  static Polygon2 from_vertices(std::vector<Vec2> vertices);

  const std::vector<Vec2>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  const Vec2& operator[](std::size_t i) const { return vertices_[i]; }
  const Vec2& vertex(std::size_t i) const { return vertices_[i % vertices_.size()]; }

  double signed_area() const;
  double area() const { return std::abs(signed_area()); }
  double perimeter() const;
  Vec2 centroid() const;
  bool is_convex(double tol = 1e-12) const;

  /// Outward unit normal of edge i (from vertex i to i+1).
  Vec2 edge_normal(std::size_t i) const {
    Vec2 e = vertex(i + 1) - vertex(i);
    return Vec2(e.y(), -e.x()).normalized();
  }

  Polygon2 transformed(double c, double s, const Vec2& t) const {
    Polygon2 out;
    out.vertices_.reserve(vertices_.size());
    for (const auto& v : vertices_) out.vertices_.emplace_back(c * v.x() - s * v.y() + t.x(), s * v.x() + c * v.y() + t.y());
    return out;
  }
  Polygon2 transformed(double theta, const Vec2& t) const {
    return transformed(std::cos(theta), std::sin(theta), t);
  }
  Polygon2 translated(const Vec2& t) const { return transformed(1.0, 0.0, t); }

  /// Max distance from `center` to any vertex.
  double radius_about(const Vec2& center) const {
    double r = 0.0;
    for (const auto& v : vertices_) r = std::max(r, (v - center).norm());
    return r;
  }

  std::pair<Vec2, Vec2> bounds() const {
    Vec2 lo = vertices_.front(), hi = vertices_.front();
    for (const auto& v : vertices_) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    return {lo, hi};
  }

  /// Interval of vertex projections onto `axis`.
  std::pair<double, double> project(const Vec2& axis) const {
    double lo = axis.dot(vertices_.front()), hi = lo;
    for (const auto& v : vertices_) {
      double d = axis.dot(v);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    return {lo, hi};
  }

 private:
  std::vector<Vec2> vertices_;
};

inline double Polygon2::signed_area() const {
  double a = 0.0;
  for (std::size_t i = 0; i < vertices_.size(); ++i) a += cross2(vertex(i), vertex(i + 1));
  return 0.5 * a;
}

inline double Polygon2::perimeter() const {
  double p = 0.0;
  for (std::size_t i = 0; i < vertices_.size(); ++i) p += (vertex(i + 1) - vertex(i)).norm();
  return p;
}

inline Vec2 Polygon2::centroid() const {
  double a = 0.0;
  Vec2 c = Vec2::Zero();
  const Vec2 o = vertices_.front();
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    Vec2 p = vertex(i) - o, q = vertex(i + 1) - o;
    double w = cross2(p, q);
    a += w;
    c += w * (p + q);
  }
  if (std::abs(a) < 1e-300) return o;
  return o + c / (3.0 * a);
}

inline bool Polygon2::is_convex(double tol) const {
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    Vec2 e0 = vertex(i + 1) - vertex(i), e1 = vertex(i + 2) - vertex(i + 1);
    if (cross2(e0, e1) < -tol * e0.norm() * e1.norm()) return false;
  }
  return true;
}

namespace detail {

inline int orient(const Vec2& a, const Vec2& b, const Vec2& c) {
  double v = cross2(b - a, c - a);
  return (v > 0) - (v < 0);
}

inline bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
  return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
         std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y());
}

inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

}  // namespace detail

inline Polygon2 Polygon2::from_vertices(std::vector<Vec2> vertices) {
  if (vertices.size() < 3) throw Error("degenerate polygon: fewer than 3 vertices");
  Polygon2 p;
  p.vertices_ = std::move(vertices);
  double a = p.signed_area();
  if (!(std::abs(a) > 1e-14)) throw Error("degenerate polygon: zero area");
  if (a < 0) std::reverse(p.vertices_.begin(), p.vertices_.end());
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // adjacent edges share a vertex
      if (detail::segments_intersect(p.vertex(i), p.vertex(i + 1), p.vertex(j), p.vertex(j + 1)))
        throw Error("polygon is not simple");
    }
  }
  return p;
}

/// Andrew's monotone chain. Returns the hull ring in CCW order with collinear
/// and nearly collinear (turn below ~1e-12 rad) points dropped, so the ring is
/// strictly convex however the cross products are rounded. Fewer than three
/// points means degenerate input.
inline std::vector<Vec2> convex_hull_points(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  auto no_left_turn = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    const Vec2 u = b - a, v = c - a;
    return cross2(u, v) <= 1e-12 * u.norm() * v.norm();
  };
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && no_left_turn(hull[k - 2], hull[k - 1], p)) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    const Vec2& p = pts[i - 1];
    while (k >= t && no_left_turn(hull[k - 2], hull[k - 1], p)) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

inline Polygon2 convex_hull(std::vector<Vec2> pts) {
  auto hull = convex_hull_points(std::move(pts));
  if (hull.size() < 3) throw Error("degenerate footprint");
  return Polygon2::from_vertices(std::move(hull));
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  Vec2 ab = b - a;
  double len2 = ab.squaredNorm();
  double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

inline double boundary_distance(const Vec2& p, const Polygon2& poly) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) d = std::min(d, point_segment_distance(p, poly.vertex(i), poly.vertex(i + 1)));
  return d;
}

/// Even-odd crossing test; boundary points count as inside for convex use.
inline bool contains(const Polygon2& poly, const Vec2& p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < x) inside = !inside;
    }
  }
  return inside || boundary_distance(p, poly) <= 1e-12;
}

/// Boundary of the Minkowski sum of a convex polygon with a disc. Arcs around
/// each vertex are split into segments of at most `max_arc_step` radians with
/// every emitted vertex exactly `radius` away from the source vertex.
inline Polygon2 dilate_polygon(const Polygon2& poly, double radius, double max_arc_step = 2.0 * kPi / 180.0) {
  if (poly.size() < 3 || !(poly.area() > 1e-14)) throw Error("degenerate polygon");
  if (radius < 0) throw Error("dilate_polygon: negative radius");
  if (!poly.is_convex()) throw Error("dilate_polygon: polygon must be convex");
  if (radius == 0.0) return poly;
  std::vector<Vec2> out;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 n_in = poly.edge_normal(i + n - 1);  // edge arriving at vertex i
    Vec2 n_out = poly.edge_normal(i);         // edge leaving vertex i
    double a0 = std::atan2(n_in.y(), n_in.x());
    double a1 = std::atan2(n_out.y(), n_out.x());
    double sweep = a1 - a0;
    while (sweep < 0) sweep += 2.0 * kPi;
    while (sweep >= 2.0 * kPi) sweep -= 2.0 * kPi;
    int steps = std::max(1, static_cast<int>(std::ceil(sweep / max_arc_step - 1e-12)));
    if (sweep < 1e-12) steps = 0;
    const Vec2& v = poly[i];
    for (int s = 0; s <= steps; ++s) {
      double a = steps == 0 ? a0 : a0 + sweep * s / steps;
      out.emplace_back(v.x() + radius * std::cos(a), v.y() + radius * std::sin(a));
    }
  }
  // Collapse coincident points produced by zero-angle corners.
  std::vector<Vec2> ring;
  for (const auto& p : out)
    if (ring.empty() || (p - ring.back()).norm() > 1e-12) ring.push_back(p);
  while (ring.size() > 1 && (ring.front() - ring.back()).norm() <= 1e-12) ring.pop_back();
  return Polygon2::from_vertices(std::move(ring));
}

/// Minimum translation vector: moving the second polygon by normal * depth
/// separates it from the first.
struct Mtv {
  Vec2 normal;
  double depth;
};

/// Separating-axis test over all edge normals of two convex polygons.
/// Returns nullopt when the polygons are disjoint or merely touching.
inline std::optional<Mtv> polygon_overlap(const Polygon2& a, const Polygon2& b) {
  if (!a.is_convex(1e-9) || !b.is_convex(1e-9)) throw Error("polygon_overlap: non-convex input");
  Mtv best{Vec2::Zero(), std::numeric_limits<double>::infinity()};
  auto test_axes = [&](const Polygon2& p) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      Vec2 axis = p.edge_normal(i);
      auto [amin, amax] = a.project(axis);
      auto [bmin, bmax] = b.project(axis);
      double forward = amax - bmin;  // move b along +axis
      double backward = bmax - amin; // move b along -axis
      double depth = std::min(forward, backward);
      if (depth <= 0) return false;
      if (depth < best.depth) best = {forward <= backward ? axis : Vec2(-axis), depth};
    }
    return true;
  };
  if (!test_axes(a) || !test_axes(b)) return std::nullopt;
  return best;
}

/// Regular n-gon inscribed in a circle, CCW from angle `phase`.
inline Polygon2 regular_polygon(const Vec2& center, double radius, int n, double phase = 0.0) {
  std::vector<Vec2> v;
  v.reserve(n);
  for (int i = 0; i < n; ++i) {
    double a = phase + 2.0 * kPi * i / n;
    v.emplace_back(center.x() + radius * std::cos(a), center.y() + radius * std::sin(a));
  }
  return Polygon2::from_vertices(std::move(v));
}

inline Polygon2 rectangle(double lx, double ly, const Vec2& center = Vec2::Zero()) {
  return Polygon2::from_vertices({center + Vec2(-lx / 2, -ly / 2), center + Vec2(lx / 2, -ly / 2),
                                  center + Vec2(lx / 2, ly / 2), center + Vec2(-lx / 2, ly / 2)});
}

}  // namespace pushgrasp
