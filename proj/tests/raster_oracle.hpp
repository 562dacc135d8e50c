#pragma once

#include <map>
#include <optional>
#include <random>

#include "pushgrasp/candidates.hpp"

namespace raster {

using namespace pushgrasp;

// ---------------------------------------------------------------------------
// Brute-force grasp oracle: everything is decided on a raster of the grasp
// frame's XY plane by point-in-polygon tests on cell centres.

struct RasterPrism {
  int id;
  std::vector<Vec2> v;
  double zlo, zhi;
};

bool inside_convex(const std::vector<Vec2>& v, const Vec2& p) {
  int sign = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 a = v[i], b = v[(i + 1) % v.size()];
    const double c = (b - a).x() * (p - a).y() - (b - a).y() * (p - a).x();
    const int s = c > 0 ? 1 : (c < 0 ? -1 : 0);
    if (s == 0) continue;
    if (sign == 0) sign = s;
    else if (s != sign) return false;
  }
  return true;
}

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).norm();
}

bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto side = [](const Vec2& p, const Vec2& q, const Vec2& r) { return (q - p).x() * (r - p).y() - (q - p).y() * (r - p).x(); };
  return side(a, b, c) * side(a, b, d) <= 0 && side(c, d, a) * side(c, d, b) <= 0;
}

// Exact convex-convex intersection by containment and edge crossings.
bool convex_intersect(const std::vector<Vec2>& p, const std::vector<Vec2>& q) {
  for (const auto& v : p)
    if (inside_convex(q, v)) return true;
  for (const auto& v : q)
    if (inside_convex(p, v)) return true;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < q.size(); ++j)
      if (segments_cross(p[i], p[(i + 1) % p.size()], q[j], q[(j + 1) % q.size()])) return true;
  return false;
}

enum class RasterResult { success, collision, slip, miss, ambiguous };

RasterResult to_raster(GraspOutcome o) {
  switch (o) {
    case GraspOutcome::success: return RasterResult::success;
    case GraspOutcome::collision: return RasterResult::collision;
    case GraspOutcome::slip: return RasterResult::slip;
    case GraspOutcome::miss: return RasterResult::miss;
  }
  return RasterResult::ambiguous;
}

// `grow` fattens every gripper box and the closing strip by that much on each
// side; comparing grow = +cell/2 and -cell/2 flags cases within half a cell of
// a decision boundary, which no raster of this resolution can settle.
RasterResult raster_oracle(const Scene& scene, const Pose& grasp, double width, const GripperSpec& g, double cell,
                           double grow) {
  const Pose inv = grasp.inverse();
  std::vector<RasterPrism> prisms;
  const RasterPrism* target = nullptr;
  for (const auto& o : scene.objects) {
    RasterPrism p{o.id, {}, 0, 0};
    const Polygon2 fp = o.footprint();
    for (const auto& w : fp.vertices()) {
      const Vec3 q = inv.apply(Vec3(w.x(), w.y(), 0.0));
      p.v.emplace_back(q.x(), q.y());
    }
    const double z0 = inv.apply(Vec3(0, 0, 0)).z(), z1 = inv.apply(Vec3(0, 0, o.shape.height)).z();
    p.zlo = std::min(z0, z1), p.zhi = std::max(z0, z1);
    prisms.push_back(p);
  }
  for (const auto& p : prisms)
    if (p.id == scene.target_id) target = &p;

  const double hx = g.finger_height / 2 + grow, hl = g.finger_length / 2, hw = width / 2 - grow,
               t = g.finger_thickness + 2 * grow;
  auto zov = [](const RasterPrism& p, double lo, double hi) { return std::min(hi, p.zhi) - std::max(lo, p.zlo) > 0; };
  auto cols = [&](double lo, double hi) {
    std::vector<double> c;
    for (double x = lo + 0.5 * cell; x < hi; x += cell) c.push_back(x);
    return c;
  };
  const auto strip = cols(-hx, hx);

  // Target extent in the closing strip.
  std::optional<double> tmin, tmax;
  if (zov(*target, -hl, hl))
    for (double y : cols(-0.2, 0.2))
      for (double x : strip)
        if (inside_convex(target->v, Vec2(x, y))) {
          if (!tmin) tmin = y;
          tmax = y;
        }
  if (!tmin) return RasterResult::miss;
  // Cell centres under-read the extent by up to a cell.
  const double extent = *tmax - *tmin + cell;
  if (std::abs(extent - 2 * hw) < 2 * cell) return RasterResult::ambiguous;
  if (extent > 2 * hw) return RasterResult::miss;

  // Open-gripper interference.
  struct Box {
    double xlo, xhi, ylo, yhi, zlo, zhi;
  };
  const Box boxes[] = {{-hx, hx, hw, hw + t, -hl, hl},
                       {-hx, hx, -hw - t, -hw, -hl, hl},
                       {-hx, hx, -hw - t, hw + t, -hl - g.palm_depth, -hl}};
  for (const auto& b : boxes)
    for (const auto& p : prisms) {
      if (!zov(p, b.zlo, b.zhi)) continue;
      auto rect = [&](double e) {
        return std::vector<Vec2>{Vec2(b.xlo - e, b.ylo - e), Vec2(b.xhi + e, b.ylo - e), Vec2(b.xhi + e, b.yhi + e),
                                 Vec2(b.xlo - e, b.yhi + e)};
      };
      if (convex_intersect(p.v, rect(cell)) != convex_intersect(p.v, rect(-cell))) return RasterResult::ambiguous;
      for (double y : cols(b.ylo, b.yhi))
        for (double x : cols(b.xlo, b.xhi))
          if (inside_convex(p.v, Vec2(x, y))) return RasterResult::collision;
    }

  // Finger sweeps: first raster row that holds any object cell.
  auto sweep = [&](int dir, double& contact_y) -> std::optional<int> {
    const auto rows = cols(-hw, hw);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const double y = dir > 0 ? rows[rows.size() - 1 - k] : rows[k];
      std::vector<int> met;
      for (const auto& p : prisms) {
        if (!zov(p, -hl, hl)) continue;
        for (double x : strip)
          if (inside_convex(p.v, Vec2(x, y))) {
            met.push_back(p.id);
            break;
          }
      }
      if (met.empty()) continue;
      contact_y = y;
      if (met.size() > 1) return -1;  // two objects inside one cell row
      // Another object within two rows is too close to call.
      for (std::size_t k2 = k + 1; k2 < std::min(rows.size(), k + 3); ++k2) {
        const double y2 = dir > 0 ? rows[rows.size() - 1 - k2] : rows[k2];
        for (const auto& p : prisms)
          if (p.id != met[0] && zov(p, -hl, hl))
            for (double x : strip)
              if (inside_convex(p.v, Vec2(x, y2))) return -1;
      }
      return met[0];
    }
    return std::nullopt;
  };
  double ypos = 0, yneg = 0;
  const auto fp = sweep(+1, ypos), fn = sweep(-1, yneg);
  if (!fp || !fn) return RasterResult::miss;
  if (*fp == -1 || *fn == -1) return RasterResult::ambiguous;
  if (*fp != scene.target_id || *fn != scene.target_id) return RasterResult::collision;

  // Friction: normals of target edges passing next to the contact-row cells.
  Vec2 centre = Vec2::Zero();
  for (const auto& v : target->v) centre += v;
  centre /= static_cast<double>(target->v.size());
  auto deviation = [&](double y, const Vec2& axis) {
    double best = kPi;
    for (double x : strip) {
      const Vec2 c(x, y);
      if (!inside_convex(target->v, c)) continue;
      for (std::size_t i = 0; i < target->v.size(); ++i) {
        const Vec2 a = target->v[i], b = target->v[(i + 1) % target->v.size()];
        if (segment_distance(c, a, b) > 1.5 * cell) continue;
        Vec2 n(-(b - a).y(), (b - a).x());
        n.normalize();
        if (n.dot(a - centre) < 0) n = -n;
        best = std::min(best, std::acos(std::clamp(n.dot(axis), -1.0, 1.0)));
      }
    }
    return best;
  };
  const double cone = g.friction_cone_half_angle + 1e-9;
  if (deviation(ypos, Vec2(0, 1)) > cone || deviation(yneg, Vec2(0, -1)) > cone) return RasterResult::slip;
  return RasterResult::success;
}

struct Agreement {
  int compared = 0, ambiguous = 0, disagreements = 0;
  std::map<GraspOutcome, int> seen;  // oracle verdicts among compared cases
  std::string first_disagreement;
};

// Up to 8 sampled candidates per scene on `n_scenes` random 8-object scenes,
// three of them perturbed in position and width. Cases whose raster verdict
// moves when the fingers grow or shrink by half a cell, or that the raster
// flags as unresolvable, are counted as ambiguous and not compared.
inline Agreement compare_on_random_scenes(int n_scenes, double cell = 2.5e-4) {
  const auto lib = default_shape_library();
  GripperSpec g;
  Rng rng(5);
  std::uniform_real_distribution<double> jitter(-0.01, 0.01), wjit(-0.02, 0.0);
  Agreement a;
  for (std::uint64_t seed = 0; seed < static_cast<std::uint64_t>(n_scenes); ++seed) {
    const auto s = generate_scene(8, lib, 1000 + seed);
    const auto cloud = render_cloud(s, 256, 0.0, seed);
    auto cands = sample_grasps(cloud.with_id(s.target_id), g, 64);
    std::shuffle(cands.begin(), cands.end(), rng);
    for (std::size_t k = 0; k < std::min<std::size_t>(cands.size(), 8); ++k) {
      GraspCandidate c = cands[k];
      if (k >= 5) {
        c.pose.translation += Vec3(jitter(rng), jitter(rng), 0.0);
        c.width = std::clamp(c.width + wjit(rng), 0.005, g.max_opening);
      }
      const auto want = grasp_oracle(s, c.pose, c.width, g);
      const auto r0 = raster_oracle(s, c.pose, c.width, g, cell, 0.0);
      const auto lo = raster_oracle(s, c.pose, c.width, g, cell, -cell / 2);
      const auto hi = raster_oracle(s, c.pose, c.width, g, cell, cell / 2);
      if (lo != hi || r0 == RasterResult::ambiguous) {
        ++a.ambiguous;
        continue;
      }
      ++a.compared;
      ++a.seen[want];
      if (to_raster(want) != r0) {
        if (a.disagreements++ == 0)
          a.first_disagreement = "scene " + std::to_string(seed) + " candidate " + std::to_string(k) + " oracle " +
                                 to_string(want);
      }
    }
  }
  return a;
}

}  // namespace raster
