#pragma once

#include <algorithm>
#include <vector>

#include "pushgrasp/sim.hpp"

namespace pushgrasp {

struct GraspCandidate {
  Pose pose;  // z = world -z (approach), y = closing axis, x = y x z
  double width = 0.0;
  double source_score = 0.0;
};

struct PushCandidate {
  Pose pose;  // z = (0,0,-1), x = horizontal toward the target centroid, y = z x x
  Vec3 start = Vec3::Zero();
};

struct GraspSamplerConfig {
  int directions = 36;  // spread over 180 degrees
  double width_clearance = 0.01;
  double offset_fraction = 0.25;
};

namespace detail {

/// Smallest angle between `axis` and the outward normals of the hull edges
/// that realise the hull's support in that direction.
inline double support_normal_deviation(const Polygon2& hull, const Vec2& axis) {
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& v : hull.vertices()) hi = std::max(hi, axis.dot(v));
  double best = kPi;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    double top = std::max(axis.dot(hull.vertex(i)), axis.dot(hull.vertex(i + 1)));
    if (top >= hi - 1e-12) best = std::min(best, std::acos(std::clamp(hull.edge_normal(i).dot(axis), -1.0, 1.0)));
  }
  return best;
}

}  // namespace detail

/// Top-down antipodal sampler over caliper directions anchored at the target's
/// bounding-box orientation. For each closing direction whose caliper width
/// fits the gripper, emits grasps at the footprint middle and at +/- a quarter
/// of the footprint length along the grasp x-axis. Sorted by descending
/// source score and truncated to `n_max`.
inline std::vector<GraspCandidate> sample_grasps(const PointCloud& target_cloud, const GripperSpec& gripper, int n_max,
                                                 const GraspSamplerConfig& cfg = {}) {
  if (target_cloud.empty()) throw Error("sample_grasps: empty target cloud");
  auto ring = convex_hull_points(target_cloud.xy());
  if (ring.size() < 3) return {};
  const Polygon2 hull = Polygon2::from_vertices(std::move(ring));
  const Obb obb = compute_obb(target_cloud);
  double anchor = std::fmod(std::atan2(obb.axes(1, 0), obb.axes(0, 0)), kPi);
  if (anchor < 0) anchor += kPi;
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& p : target_cloud.points) top = std::max(top, p.z());
  const double origin_z = grasp_origin_height(gripper, top);

  std::vector<GraspCandidate> out;
  for (int k = 0; k < cfg.directions; ++k) {
    const double phi = anchor + kPi * k / cfg.directions;
    const Rot3 rot = top_down_rotation(phi);
    const Vec2 ay(rot(0, 1), rot(1, 1)), ax(rot(0, 0), rot(1, 0));
    auto [lo, hi] = hull.project(ay);
    const double caliper = hi - lo;
    if (caliper > gripper.max_opening) continue;
    const double width = std::min(caliper + cfg.width_clearance, gripper.max_opening);
    auto [xlo, xhi] = hull.project(ax);
    const double mid = 0.5 * (xlo + xhi), ext = xhi - xlo;
    const double score =
        1.0 - 0.5 * (detail::support_normal_deviation(hull, ay) + detail::support_normal_deviation(hull, -ay)) /
                  (kPi / 2);
    for (double off : {0.0, -cfg.offset_fraction, cfg.offset_fraction}) {
      Vec2 c = ax * (mid + off * ext) + ay * (0.5 * (lo + hi));
      GraspCandidate g;
      g.pose = {rot, Vec3(c.x(), c.y(), origin_z)};
      g.width = width;
      g.source_score = std::clamp(score, 0.0, 1.0);
      out.push_back(g);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const GraspCandidate& a, const GraspCandidate& b) { return a.source_score > b.source_score; });
  if (n_max >= 0 && out.size() > static_cast<std::size_t>(n_max)) out.resize(static_cast<std::size_t>(n_max));
  return out;
}

inline constexpr double kPushDilation = 0.016;
inline constexpr double kPushSpacing = 0.03;

/// Push frame at `start` facing `toward`: z down, x horizontal toward the
/// target, y = z x x.
inline Pose push_frame(const Vec3& start, const Vec2& toward) {
  Vec2 d = toward - Vec2(start.x(), start.y());
  if (d.norm() < 1e-12) throw Error("push start coincides with the target centroid");
  d.normalize();
  Vec3 x(d.x(), d.y(), 0.0), z(0.0, 0.0, -1.0);
  Rot3 r;
  r.col(0) = x;
  r.col(1) = z.cross(x);
  r.col(2) = z;
  return {r, start};
}

/// Push starts every `spacing` metres of arc length along the target's convex
/// hull dilated by `dilation`, at the bounding-box z centre. A final start
/// closer than half a spacing to the first one is dropped.
inline std::vector<PushCandidate> sample_pushes(const PointCloud& target_cloud, double dilation = kPushDilation,
                                                double spacing = kPushSpacing) {
  if (target_cloud.empty()) throw Error("sample_pushes: empty target cloud");
  const Polygon2 hull = convex_hull(target_cloud.xy());
  const Polygon2 contour = dilate_polygon(hull, dilation);
  const double z = compute_obb(target_cloud).center.z();
  Vec2 centroid = Vec2::Zero();
  for (const auto& p : target_cloud.points) centroid += Vec2(p.x(), p.y());
  centroid /= static_cast<double>(target_cloud.size());

  std::vector<PushCandidate> out;
  const double last = std::max(0.0, contour.perimeter() - 0.5 * spacing);
  double next = 0.0, walked = 0.0;
  for (std::size_t i = 0; i < contour.size() && next <= last; ++i) {
    const Vec2 a = contour.vertex(i), b = contour.vertex(i + 1);
    const double len = (b - a).norm();
    while (next <= walked + len && next <= last) {
      Vec2 p = len > 0 ? Vec2(a + (b - a) * ((next - walked) / len)) : a;
      Vec3 start(p.x(), p.y(), z);
      out.push_back({push_frame(start, centroid), start});
      next += spacing;
    }
    walked += len;
  }
  return out;
}

/// Drops pushes whose start cylinder (radius pusher_radius + margin, any
/// height) contains a scene point.
inline std::vector<PushCandidate> filter_push_collisions(const std::vector<PushCandidate>& candidates,
                                                         const PointCloud& scene_cloud, double pusher_radius,
                                                         double margin = 0.002) {
  const double r2 = (pusher_radius + margin) * (pusher_radius + margin);
  std::vector<PushCandidate> out;
  for (const auto& c : candidates) {
    bool clear = true;
    for (const auto& p : scene_cloud.points) {
      double dx = p.x() - c.start.x(), dy = p.y() - c.start.y();
      if (dx * dx + dy * dy < r2) {
        clear = false;
        break;
      }
    }
    if (clear) out.push_back(c);
  }
  return out;
}

/// Drops grasps whose open finger boxes hold at least `min_points` points of
/// instances other than the target.
inline std::vector<GraspCandidate> filter_grasp_collisions(const std::vector<GraspCandidate>& candidates,
                                                           const PointCloud& scene_cloud, int target_id,
                                                           const GripperSpec& gripper, int min_points = 3) {
  std::vector<GraspCandidate> out;
  for (const auto& g : candidates) {
    const auto boxes = gripper_boxes(gripper, g.width);
    const Pose inv = g.pose.inverse();
    int hits = 0;
    for (std::size_t i = 0; i < scene_cloud.size() && hits < min_points; ++i) {
      if (scene_cloud.instance_ids[i] == target_id) continue;
      Vec3 q = inv.apply(scene_cloud.points[i]);
      if (boxes.finger_pos.contains(q) || boxes.finger_neg.contains(q)) ++hits;
    }
    if (hits < min_points) out.push_back(g);
  }
  return out;
}

}  // namespace pushgrasp
