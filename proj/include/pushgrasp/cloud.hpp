#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "pushgrasp/polygon.hpp"

namespace pushgrasp {

/// Positions with per-point instance ids (0 = support surface, k >= 1 =
/// object k) and optional fixed-width per-point channels.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<int> instance_ids;
  std::size_t channel_width = 0;
  std::vector<double> channels;  // row-major, size() * channel_width

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void reserve(std::size_t n) {
    points.reserve(n);
    instance_ids.reserve(n);
    channels.reserve(n * channel_width);
  }

  void push_back(const Vec3& p, int id) {
    if (channel_width != 0) throw Error("push_back without channels on a channelled cloud");
    points.push_back(p);
    instance_ids.push_back(id);
  }

  /// Copies point `i` of `src` (including channels) to the end of this cloud.
  void append_from(const PointCloud& src, std::size_t i) {
    points.push_back(src.points[i]);
    instance_ids.push_back(src.instance_ids[i]);
    for (std::size_t c = 0; c < channel_width; ++c) channels.push_back(src.channels[i * channel_width + c]);
  }

  PointCloud select(const std::vector<std::size_t>& indices) const {
    PointCloud out;
    out.channel_width = channel_width;
    out.reserve(indices.size());
    for (auto i : indices) out.append_from(*this, i);
    return out;
  }

  PointCloud with_id(int id) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < size(); ++i)
      if (instance_ids[i] == id) idx.push_back(i);
    return select(idx);
  }

  std::vector<Vec2> xy() const {
    std::vector<Vec2> out;
    out.reserve(size());
    for (const auto& p : points) out.emplace_back(p.x(), p.y());
    return out;
  }

  bool consistent() const {
    return instance_ids.size() == points.size() && channels.size() == points.size() * channel_width;
  }
};

inline PointCloud transform_cloud(const PointCloud& cloud, const Pose& t) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = t.apply(p);
  return out;
}

/// Box with world-z as third axis (free rotation about z only).
struct Obb {
  Vec3 center = Vec3::Zero();
  Rot3 axes = Rot3::Identity();
  Vec3 half_extents = Vec3::Zero();

  bool contains(const Vec3& p, double tol = 1e-9) const {
    Vec3 local = axes.transpose() * (p - center);
    return (local.cwiseAbs() - half_extents).maxCoeff() <= tol;
  }
};

/// Minimal-area planar box via rotating calipers over hull edges; exact z range.
inline Obb compute_obb(const PointCloud& cloud) {
  if (cloud.empty()) throw Error("empty cloud");
  double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
  for (const auto& p : cloud.points) {
    zmin = std::min(zmin, p.z());
    zmax = std::max(zmax, p.z());
  }
  auto hull = convex_hull_points(cloud.xy());
  std::vector<double> angles;
  if (hull.size() >= 3) {
    for (std::size_t i = 0; i < hull.size(); ++i) {
      Vec2 e = hull[(i + 1) % hull.size()] - hull[i];
      angles.push_back(std::atan2(e.y(), e.x()));
    }
  } else if (hull.size() == 2) {
    Vec2 e = hull[1] - hull[0];
    angles.push_back(std::atan2(e.y(), e.x()));
  } else {
    angles.push_back(0.0);
  }
  double best_area = std::numeric_limits<double>::infinity();
  Obb best;
  for (double a : angles) {
    Vec2 u(std::cos(a), std::sin(a)), v(-std::sin(a), std::cos(a));
    double umin = std::numeric_limits<double>::infinity(), umax = -umin, vmin = umin, vmax = -umin;
    for (const auto& p : hull) {
      umin = std::min(umin, u.dot(p));
      umax = std::max(umax, u.dot(p));
      vmin = std::min(vmin, v.dot(p));
      vmax = std::max(vmax, v.dot(p));
    }
    double area = (umax - umin) * (vmax - vmin);
    if (area < best_area - 1e-15) {
      best_area = area;
      Vec2 c = u * 0.5 * (umin + umax) + v * 0.5 * (vmin + vmax);
      best.center = Vec3(c.x(), c.y(), 0.5 * (zmin + zmax));
      best.axes = rot_z(a);
      best.half_extents = Vec3(0.5 * (umax - umin), 0.5 * (vmax - vmin), 0.5 * (zmax - zmin));
    }
  }
  return best;
}

enum class SampleMethod { farthest_point, random };

/// Exactly k points. With fewer than k inputs every input point is kept and
/// the remainder is drawn with replacement.
inline std::vector<std::size_t> downsample_indices(const PointCloud& cloud, std::size_t k, SampleMethod method,
                                                   std::uint64_t seed) {
  if (cloud.empty()) throw Error("downsample: empty cloud");
  if (k == 0) throw Error("downsample: k must be >= 1");
  Rng rng(seed);
  const std::size_t n = cloud.size();
  std::vector<std::size_t> idx;
  idx.reserve(k);
  if (n <= k) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (idx.size() < k) idx.push_back(pick(rng));
    return idx;
  }
  if (method == SampleMethod::random) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    // Partial Fisher-Yates: the first k entries are a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    all.resize(k);
    return all;
  }
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t current = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t s = 0; s < k; ++s) {
    idx.push_back(current);
    const Vec3& c = cloud.points[current];
    std::size_t next = 0;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = (cloud.points[i] - c).squaredNorm();
      if (d < dist[i]) dist[i] = d;
      if (dist[i] > far) {
        far = dist[i];
        next = i;
      }
    }
    current = next;
  }
  return idx;
}

inline PointCloud downsample(const PointCloud& cloud, std::size_t k, SampleMethod method, std::uint64_t seed) {
  return cloud.select(downsample_indices(cloud, k, method, seed));
}

inline PointCloud add_noise(const PointCloud& cloud, double sigma, std::uint64_t seed) {
  if (sigma < 0) throw Error("add_noise: sigma must be >= 0");
  PointCloud out = cloud;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  for (auto& p : out.points) {
    double dx = g(rng), dy = g(rng), dz = g(rng);
    p += Vec3(dx, dy, dz);
  }
  return out;
}

}  // namespace pushgrasp
