#pragma once

#include <array>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pushgrasp/cloud.hpp"

namespace pushgrasp {

/// Parallel-jaw gripper dimensions. Fingers are boxes `finger_thickness` deep
/// along the closing axis, `finger_height` wide across it and `finger_length`
/// long along the approach axis; the palm sits behind the fingers.
struct GripperSpec {
  double finger_length = 0.04;
  double finger_thickness = 0.01;
  double finger_height = 0.03;
  double max_opening = 0.10;
  double palm_depth = 0.02;
  double friction_cone_half_angle = 20.0 * kPi / 180.0;

  void validate() const {
    if (!(finger_length > 0 && finger_thickness > 0 && finger_height > 0 && max_opening > 0 && palm_depth > 0 &&
          friction_cone_half_angle > 0))
      throw Error("gripper dimensions must be positive");
    if (!(max_opening > 2 * finger_thickness)) throw Error("gripper max_opening must exceed 2 * finger_thickness");
  }
};

/// Gripper-frame boxes. The frame origin is the centre of the closing region;
/// +z is the approach direction, +y the closing axis.
struct AlignedBox {
  Vec3 lo, hi;
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Vec3 size() const { return hi - lo; }
  Vec3 center() const { return 0.5 * (lo + hi); }
};

struct GripperBoxes {
  AlignedBox finger_pos, finger_neg, palm;
};

inline GripperBoxes gripper_boxes(const GripperSpec& g, double width) {
  const double hx = g.finger_height / 2, hw = width / 2, t = g.finger_thickness, hl = g.finger_length / 2;
  return {
      {Vec3(-hx, hw, -hl), Vec3(hx, hw + t, hl)},
      {Vec3(-hx, -hw - t, -hl), Vec3(hx, -hw, hl)},
      {Vec3(-hx, -hw - t, -hl - g.palm_depth), Vec3(hx, hw + t, -hl)},
  };
}

/// Fingertip clearance above the table and above the target's top face.
inline constexpr double kFingertipFloor = 0.002;
inline constexpr double kPalmClearance = 0.005;

/// World height of the gripper frame origin for a top-down grasp on an object
/// whose top is at `top_z`: the palm clears the top, the tips stay off the table.
inline double grasp_origin_height(const GripperSpec& g, double top_z) {
  double tip = std::max(kFingertipFloor, top_z + kPalmClearance - g.finger_length);
  return tip + g.finger_length / 2;
}

/// Top-down grasp frame: z = world -z, y = closing axis at heading `phi`.
inline Rot3 top_down_rotation(double phi) {
  Vec3 y(std::cos(phi), std::sin(phi), 0.0);
  Vec3 z(0.0, 0.0, -1.0);
  Rot3 r;
  r.col(0) = y.cross(z);
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

struct ShapeSpec {
  std::string name;
  Polygon2 footprint;  // object frame, centroid at the origin
  double height = 0.0;
};

inline ShapeSpec make_shape(std::string name, const Polygon2& footprint, double height) {
  if (!(height > 0)) throw Error("shape '" + name + "': height must be positive");
  if (!footprint.is_convex()) throw Error("shape '" + name + "': footprint must be convex");
  ShapeSpec s{std::move(name), footprint.translated(-footprint.centroid()), height};
  return s;
}

inline std::vector<ShapeSpec> default_shape_library() {
  return {
      make_shape("box_cube", rectangle(0.04, 0.04), 0.05),
      make_shape("box_bar", rectangle(0.07, 0.035), 0.045),
      make_shape("box_slab", rectangle(0.06, 0.05), 0.03),
      make_shape("box_tall", rectangle(0.05, 0.03), 0.07),
      make_shape("box_long", rectangle(0.08, 0.03), 0.04),
      make_shape("cyl_small", regular_polygon(Vec2::Zero(), 0.02, 24), 0.06),
      make_shape("cyl_wide", regular_polygon(Vec2::Zero(), 0.03, 24), 0.04),
      make_shape("hex_prism", regular_polygon(Vec2::Zero(), 0.03, 6), 0.05),
      make_shape("oct_prism", regular_polygon(Vec2::Zero(), 0.025, 8), 0.035),
  };
}

/// Library text format, one shape per line: `name height x1 y1 x2 y2 ...`.
inline std::vector<ShapeSpec> parse_shape_library(const std::string& text) {
  std::vector<ShapeSpec> lib;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name, tok;
    ls >> name;
    if (name.empty()) continue;
    std::vector<double> nums;
    while (ls >> tok) nums.push_back(parse_double(tok));
    if (nums.size() < 7 || (nums.size() - 1) % 2 != 0) throw Error("bad shape line: " + line);
    std::vector<Vec2> v;
    for (std::size_t i = 1; i + 1 < nums.size(); i += 2) v.emplace_back(nums[i], nums[i + 1]);
    lib.push_back(make_shape(name, Polygon2::from_vertices(v), nums[0]));
  }
  if (lib.empty()) throw Error("shape library is empty");
  return lib;
}

struct PlanarPose {
  double x = 0, y = 0, theta = 0;
  Pose to_pose() const { return planar_pose(x, y, theta); }
  bool operator==(const PlanarPose&) const = default;
};

struct SimObject {
  int id = 0;
  ShapeSpec shape;
  PlanarPose pose;

  Polygon2 footprint() const { return shape.footprint.transformed(pose.theta, Vec2(pose.x, pose.y)); }
  Vec2 center() const { return {pose.x, pose.y}; }
  double circumradius() const { return shape.footprint.radius_about(Vec2::Zero()); }
};

struct Workspace {
  double x_min = 0.25, y_min = -0.225, width = 0.50, depth = 0.45;
  double x_max() const { return x_min + width; }
  double y_max() const { return y_min + depth; }
  Vec2 center() const { return {x_min + width / 2, y_min + depth / 2}; }
  bool contains(const Vec2& p) const { return p.x() >= x_min && p.x() <= x_max() && p.y() >= y_min && p.y() <= y_max(); }
  bool contains(const Polygon2& poly, double tol = 1e-12) const {
    auto [lo, hi] = poly.bounds();
    return lo.x() >= x_min - tol && lo.y() >= y_min - tol && hi.x() <= x_max() + tol && hi.y() <= y_max() + tol;
  }
};

struct Scene {
  std::vector<SimObject> objects;
  int target_id = 0;
  Workspace workspace;
  std::uint64_t rng_seed = 0;

  const SimObject* find(int id) const {
    for (const auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
  const SimObject& target() const {
    const SimObject* t = find(target_id);
    if (!t) throw Error("scene target is missing");
    return *t;
  }
  Scene without(int id) const {
    Scene s = *this;
    std::erase_if(s.objects, [id](const SimObject& o) { return o.id == id; });
    return s;
  }
};

/// Largest pairwise footprint penetration depth (0 when nothing overlaps).
inline double max_penetration(const Scene& scene) {
  double worst = 0.0;
  std::vector<Polygon2> fps;
  for (const auto& o : scene.objects) fps.push_back(o.footprint());
  for (std::size_t i = 0; i < fps.size(); ++i)
    for (std::size_t j = i + 1; j < fps.size(); ++j)
      if (auto m = polygon_overlap(fps[i], fps[j])) worst = std::max(worst, m->depth);
  return worst;
}

struct SceneGenConfig {
  // Placement is Gaussian around the workspace centre; these are the std devs.
  double spread_x = 0.07;
  double spread_y = 0.06;
  int max_rejections = 10000;
};

inline Scene generate_scene(int n_objects, const std::vector<ShapeSpec>& library, std::uint64_t seed,
                            const SceneGenConfig& cfg = {}, const Workspace& ws = {}) {
  if (n_objects < 1) throw Error("generate_scene: n_objects must be >= 1");
  if (library.empty()) throw Error("generate_scene: empty shape library");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick_shape(0, library.size() - 1);
  std::uniform_real_distribution<double> pick_angle(0.0, 2.0 * kPi);
  std::normal_distribution<double> gx(ws.center().x(), cfg.spread_x), gy(ws.center().y(), cfg.spread_y);
  Scene scene;
  scene.workspace = ws;
  scene.rng_seed = seed;
  std::vector<Polygon2> placed;
  int rejections = 0;
  for (int k = 1; k <= n_objects; ++k) {
    while (true) {
      SimObject obj;
      obj.id = k;
      obj.shape = library[pick_shape(rng)];
      obj.pose.theta = pick_angle(rng);
      obj.pose.x = gx(rng);
      obj.pose.y = gy(rng);
      Polygon2 fp = obj.footprint();
      bool ok = ws.contains(fp);
      for (std::size_t i = 0; ok && i < placed.size(); ++i) ok = !polygon_overlap(placed[i], fp).has_value();
      if (ok) {
        placed.push_back(fp);
        scene.objects.push_back(std::move(obj));
        break;
      }
      if (++rejections >= cfg.max_rejections) throw Error("workspace saturated");
    }
  }
  scene.target_id = scene.objects[std::uniform_int_distribution<std::size_t>(0, scene.objects.size() - 1)(rng)].id;
  return scene;
}

/// Surface samples over the top and side faces of every object (the fused
/// multi-view cloud, no support surface), with instance ids and Gaussian noise.
inline PointCloud render_cloud(const Scene& scene, int points_per_object, double noise_sigma, std::uint64_t seed) {
  if (points_per_object < 1) throw Error("render_cloud: points_per_object must be >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  PointCloud cloud;
  cloud.reserve(scene.objects.size() * static_cast<std::size_t>(points_per_object));
  for (const auto& obj : scene.objects) {
    Polygon2 fp = obj.footprint();
    const std::size_t n = fp.size();
    const Vec2 c = fp.centroid();
    const double h = obj.shape.height;
    // Face areas: top-face fan triangles first, then side rectangles.
    std::vector<double> cdf;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += 0.5 * std::abs(cross2(fp.vertex(i) - c, fp.vertex(i + 1) - c));
      cdf.push_back(total);
    }
    for (std::size_t i = 0; i < n; ++i) {
      total += (fp.vertex(i + 1) - fp.vertex(i)).norm() * h;
      cdf.push_back(total);
    }
    for (int k = 0; k < points_per_object; ++k) {
      double r = u01(rng) * total;
      std::size_t f = std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin(), cdf.size() - 1);
      double a = u01(rng), b = u01(rng);
      Vec3 p;
      if (f < n) {
        if (a + b > 1.0) {
          a = 1.0 - a;
          b = 1.0 - b;
        }
        Vec2 q = c + a * (fp.vertex(f) - c) + b * (fp.vertex(f + 1) - c);
        p = Vec3(q.x(), q.y(), h);
      } else {
        std::size_t e = f - n;
        Vec2 q = fp.vertex(e) + a * (fp.vertex(e + 1) - fp.vertex(e));
        p = Vec3(q.x(), q.y(), b * h);
      }
      cloud.push_back(p, obj.id);
    }
  }
  return add_noise(cloud, noise_sigma, derive_seed(seed, 0x6e6f697365ULL));
}

struct PushCommand {
  Pose pose;
  double stroke = 0.125;
};

struct PushSimConfig {
  double step = 1e-3;
  int resolution_rounds = 32;
  double rotation_gain = 1.0;
  int pusher_sides = 16;
  double penetration_tolerance = 1e-4;
};

namespace detail {

inline void clamp_into(SimObject& o, const Workspace& ws) {
  auto [lo, hi] = o.footprint().bounds();
  double dx = 0, dy = 0;
  if (lo.x() < ws.x_min) dx = ws.x_min - lo.x();
  else if (hi.x() > ws.x_max()) dx = ws.x_max() - hi.x();
  if (lo.y() < ws.y_min) dy = ws.y_min - lo.y();
  else if (hi.y() > ws.y_max()) dy = ws.y_max() - hi.y();
  o.pose.x += dx;
  o.pose.y += dy;
}

inline bool circles_overlap(const Vec2& a, double ra, const Vec2& b, double rb) {
  double r = ra + rb;
  return (a - b).squaredNorm() < r * r;
}

}  // namespace detail

/// Quasi-static push: the pusher disc advances along the command's local +x.
/// Objects penetrated by the pusher are translated out along the MTV and
/// rotated about their centroid in proportion to the lever arm; object-object
/// overlap is then resolved by pairwise MTV translation. A step that cannot be
/// resolved (jammed against the workspace boundary) ends the push.
inline Scene execute_push(const Scene& scene, const PushCommand& cmd, double pusher_radius = 0.008,
                          const PushSimConfig& cfg = {}) {
  if (!(cmd.stroke > 0)) throw Error("push stroke must be positive");
  const Vec2 start(cmd.pose.translation.x(), cmd.pose.translation.y());
  if (!scene.workspace.contains(start)) throw Error("invalid push start");
  Vec2 dir(cmd.pose.rotation(0, 0), cmd.pose.rotation(1, 0));
  if (dir.norm() < 1e-9) throw Error("push direction is vertical");
  dir.normalize();
  const double tip_z = cmd.pose.translation.z();

  Scene out = scene;
  auto& objs = out.objects;
  const std::size_t n = objs.size();
  std::vector<double> radius(n);
  std::vector<bool> reachable(n);
  for (std::size_t i = 0; i < n; ++i) {
    radius[i] = objs[i].circumradius();
    reachable[i] = objs[i].shape.height > tip_z;
  }
  // A flat pusher face leads along the push direction, so results do not depend on the world heading.
  const double phase = std::atan2(dir.y(), dir.x()) + kPi / cfg.pusher_sides;
  auto pusher_at = [&](const Vec2& c) { return regular_polygon(c, pusher_radius, cfg.pusher_sides, phase); };

  {
    Polygon2 p0 = pusher_at(start);
    for (std::size_t i = 0; i < n; ++i)
      if (reachable[i] && detail::circles_overlap(start, pusher_radius, objs[i].center(), radius[i]) &&
          polygon_overlap(objs[i].footprint(), p0))
        throw Error("invalid push start");
  }

  const int steps = static_cast<int>(std::ceil(cmd.stroke / cfg.step - 1e-9));
  for (int s = 1; s <= steps; ++s) {
    const Vec2 c = start + dir * std::min(s * cfg.step, cmd.stroke);
    const Polygon2 pusher = pusher_at(c);
    const auto backup = objs;
    std::vector<bool> driven(n, false);

    for (int iter = 0; iter < 4; ++iter) {
      bool moved = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (!reachable[i] || !detail::circles_overlap(c, pusher_radius, objs[i].center(), radius[i])) continue;
        auto mtv = polygon_overlap(pusher, objs[i].footprint());
        if (!mtv) continue;
        const Vec2 centroid = objs[i].center();
        objs[i].pose.x += mtv->normal.x() * mtv->depth;
        objs[i].pose.y += mtv->normal.y() * mtv->depth;
        const double lever = cross2(c - centroid, mtv->normal);
        objs[i].pose.theta += cfg.rotation_gain * (lever / radius[i]) * (mtv->depth / radius[i]);
        detail::clamp_into(objs[i], out.workspace);
        driven[i] = true;
        moved = true;
      }
      if (!moved) break;
    }

    for (int round = 0; round < cfg.resolution_rounds; ++round) {
      bool any = false;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          if (!detail::circles_overlap(objs[i].center(), radius[i], objs[j].center(), radius[j])) continue;
          auto mtv = polygon_overlap(objs[i].footprint(), objs[j].footprint());
          if (!mtv || mtv->depth <= 1e-9) continue;
          const Vec2 d = mtv->normal * (mtv->depth + 1e-9);
          double wi = 0.5, wj = 0.5;
          if (driven[i] && !driven[j]) wi = 0.0, wj = 1.0;
          else if (driven[j] && !driven[i]) wi = 1.0, wj = 0.0;
          objs[i].pose.x -= wi * d.x();
          objs[i].pose.y -= wi * d.y();
          objs[j].pose.x += wj * d.x();
          objs[j].pose.y += wj * d.y();
          detail::clamp_into(objs[i], out.workspace);
          detail::clamp_into(objs[j], out.workspace);
          driven[i] = driven[j] = true;
          any = true;
        }
      }
      if (!any) break;
    }

    bool jammed = max_penetration(out) > cfg.penetration_tolerance;
    for (std::size_t i = 0; !jammed && i < n; ++i) {
      if (!reachable[i] || !detail::circles_overlap(c, pusher_radius, objs[i].center(), radius[i])) continue;
      auto m = polygon_overlap(pusher, objs[i].footprint());
      jammed = m && m->depth > 1e-3;
    }
    if (jammed) {
      objs = backup;
      break;
    }
  }
  return out;
}

enum class GraspOutcome { success, collision, slip, miss };

inline const char* to_string(GraspOutcome o) {
  switch (o) {
    case GraspOutcome::success: return "success";
    case GraspOutcome::collision: return "collision";
    case GraspOutcome::slip: return "slip";
    case GraspOutcome::miss: return "miss";
  }
  return "?";
}

inline GraspOutcome parse_outcome(std::string_view s) {
  if (s == "success") return GraspOutcome::success;
  if (s == "collision") return GraspOutcome::collision;
  if (s == "slip") return GraspOutcome::slip;
  if (s == "miss") return GraspOutcome::miss;
  throw Error("unknown grasp outcome '" + std::string(s) + "'");
}

namespace detail {

/// Segment a-b clipped to lo <= x <= hi; false when nothing remains.
inline bool clip_segment_x(Vec2 a, Vec2 b, double lo, double hi, Vec2& ca, Vec2& cb) {
  if (a.x() > b.x()) std::swap(a, b);
  if (b.x() < lo || a.x() > hi) return false;
  auto at = [&](double x) {
    if (b.x() == a.x()) return a;
    double t = (x - a.x()) / (b.x() - a.x());
    return Vec2(x, a.y() + t * (b.y() - a.y()));
  };
  ca = a.x() < lo ? at(lo) : a;
  cb = b.x() > hi ? at(hi) : b;
  return true;
}

struct StripContact {
  bool hit = false;
  double ymin = 0, ymax = 0;
  double dev_pos = 0, dev_neg = 0;  // normal deviation from +y at ymax / from -y at ymin
};

/// Extent of a convex polygon within the strip |x| <= half_width, and the
/// smallest deviation between the closing axis and the normals of the edges
/// that realise the extreme y on each side.
inline StripContact strip_contact(const Polygon2& poly, double half_width) {
  StripContact sc;
  std::vector<std::pair<double, double>> edge_y;  // clipped min/max y of each edge
  for (std::size_t i = 0; i < poly.size(); ++i) {
    Vec2 ca, cb;
    if (!clip_segment_x(poly.vertex(i), poly.vertex(i + 1), -half_width, half_width, ca, cb)) {
      edge_y.emplace_back(std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity());
      continue;
    }
    edge_y.emplace_back(std::min(ca.y(), cb.y()), std::max(ca.y(), cb.y()));
    if (!sc.hit) {
      sc.hit = true;
      sc.ymin = edge_y.back().first;
      sc.ymax = edge_y.back().second;
    } else {
      sc.ymin = std::min(sc.ymin, edge_y.back().first);
      sc.ymax = std::max(sc.ymax, edge_y.back().second);
    }
  }
  if (!sc.hit) return sc;
  sc.dev_pos = sc.dev_neg = kPi;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    Vec2 nrm = poly.edge_normal(i);
    if (edge_y[i].second >= sc.ymax - 1e-9) sc.dev_pos = std::min(sc.dev_pos, std::acos(std::clamp(nrm.y(), -1.0, 1.0)));
    if (edge_y[i].first <= sc.ymin + 1e-9) sc.dev_neg = std::min(sc.dev_neg, std::acos(std::clamp(-nrm.y(), -1.0, 1.0)));
  }
  return sc;
}

inline bool box_hits_prism(const AlignedBox& box, const Polygon2& local_fp, double zlo, double zhi) {
  if (std::min(box.hi.z(), zhi) - std::max(box.lo.z(), zlo) <= 0) return false;
  Polygon2 rect = Polygon2::from_vertices({Vec2(box.lo.x(), box.lo.y()), Vec2(box.hi.x(), box.lo.y()),
                                           Vec2(box.hi.x(), box.hi.y()), Vec2(box.lo.x(), box.hi.y())});
  return polygon_overlap(rect, local_fp).has_value();
}

}  // namespace detail

/// An object footprint expressed in the grasp frame, with its z range.
struct LocalPrism {
  int id;
  Polygon2 footprint;
  double zlo, zhi;
};

inline std::vector<LocalPrism> prisms_in_grasp_frame(const Scene& scene, const Pose& grasp) {
  const Vec3 gx = grasp.x_axis(), gy = grasp.y_axis();
  const Vec3& t = grasp.translation;
  // Approach axis is world -z, so local z = t.z - world z.
  std::vector<LocalPrism> out;
  for (const auto& o : scene.objects) {
    std::vector<Vec2> v;
    const Polygon2 fp = o.footprint();
    for (const auto& w : fp.vertices()) {
      Vec3 d(w.x() - t.x(), w.y() - t.y(), 0.0);
      v.emplace_back(gx.dot(d), gy.dot(d));
    }
    out.push_back({o.id, Polygon2::from_vertices(std::move(v)), t.z() - o.shape.height, t.z()});
  }
  return out;
}

/// Ground-truth outcome of a top-down grasp. Checks, in order: the target must
/// fit between the open fingers (miss), no gripper box may intersect an object
/// at the pre-close pose (collision), the first object met by each closing
/// finger must be the target (collision if another object, miss if nothing),
/// and both contact normals must lie within the friction cone (slip).
inline GraspOutcome grasp_oracle(const Scene& scene, const Pose& grasp, double width, const GripperSpec& gripper) {
  if (!(width > 0 && width <= gripper.max_opening + 1e-12)) throw Error("grasp width out of range");
  const auto boxes = gripper_boxes(gripper, width);
  const double hx = gripper.finger_height / 2, hl = gripper.finger_length / 2;
  const auto prisms = prisms_in_grasp_frame(scene, grasp);

  const LocalPrism* target = nullptr;
  for (const auto& p : prisms)
    if (p.id == scene.target_id) target = &p;
  if (!target) throw Error("scene target is missing");

  auto finger_z_overlap = [&](const LocalPrism& p) { return std::min(hl, p.zhi) - std::max(-hl, p.zlo) > 0; };

  const auto tc = detail::strip_contact(target->footprint, hx);
  if (!tc.hit || !finger_z_overlap(*target)) return GraspOutcome::miss;
  if (tc.ymax - tc.ymin > width) return GraspOutcome::miss;

  for (const auto& p : prisms)
    for (const AlignedBox* b : {&boxes.finger_pos, &boxes.finger_neg, &boxes.palm})
      if (detail::box_hits_prism(*b, p.footprint, p.zlo, p.zhi)) return GraspOutcome::collision;

  const LocalPrism* first_pos = nullptr;
  const LocalPrism* first_neg = nullptr;
  double best_pos = -std::numeric_limits<double>::infinity(), best_neg = std::numeric_limits<double>::infinity();
  for (const auto& p : prisms) {
    if (!finger_z_overlap(p)) continue;
    auto sc = detail::strip_contact(p.footprint, hx);
    if (!sc.hit) continue;
    // Each finger sweeps inward from |y| = width/2; objects outside it are never met.
    if (sc.ymin < width / 2 && (sc.ymax > best_pos || (sc.ymax == best_pos && &p == target)))
      best_pos = sc.ymax, first_pos = &p;
    if (sc.ymax > -width / 2 && (sc.ymin < best_neg || (sc.ymin == best_neg && &p == target)))
      best_neg = sc.ymin, first_neg = &p;
  }
  if (!first_pos || !first_neg) return GraspOutcome::miss;
  if (first_pos != target || first_neg != target) return GraspOutcome::collision;

  // The cone is closed; the tolerance keeps exact-boundary contacts (common with
  // sampler directions on a 5 degree grid) from flipping on rounding.
  const double cone = gripper.friction_cone_half_angle + 1e-9;
  if (tc.dev_pos > cone || tc.dev_neg > cone) return GraspOutcome::slip;
  return GraspOutcome::success;
}

// Scene text format:
//   scene workspace <x_min> <y_min> <width> <depth> target <id> seed <seed> objects <n>
//   <id> <shape_name> <x> <y> <theta>      (n lines)
// Several scenes may follow each other in one file.
inline std::string serialize_scene(const Scene& s) {
  std::ostringstream out;
  out << "scene workspace " << format_exact(s.workspace.x_min) << ' ' << format_exact(s.workspace.y_min) << ' '
      << format_exact(s.workspace.width) << ' ' << format_exact(s.workspace.depth) << " target " << s.target_id
      << " seed " << s.rng_seed << " objects " << s.objects.size() << '\n';
  for (const auto& o : s.objects)
    out << o.id << ' ' << o.shape.name << ' ' << format_exact(o.pose.x) << ' ' << format_exact(o.pose.y) << ' '
        << format_exact(o.pose.theta) << '\n';
  return out.str();
}

inline const ShapeSpec& find_shape(const std::vector<ShapeSpec>& library, const std::string& name) {
  for (const auto& s : library)
    if (s.name == name) return s;
  throw Error("unknown shape '" + name + "'");
}

/// Reads one scene block from `in`; returns false at end of input.
inline bool read_scene(std::istream& in, const std::vector<ShapeSpec>& library, Scene& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream hs(line);
    std::string kw, ws_kw, t_kw, s_kw, o_kw, a, b, c, d, target, seed, count;
    hs >> kw >> ws_kw >> a >> b >> c >> d >> t_kw >> target >> s_kw >> seed >> o_kw >> count;
    if (kw != "scene" || ws_kw != "workspace" || t_kw != "target" || s_kw != "seed" || o_kw != "objects")
      throw Error("bad scene header: " + line);
    Scene s;
    s.workspace = {parse_double(a), parse_double(b), parse_double(c), parse_double(d)};
    s.target_id = static_cast<int>(parse_int(target));
    s.rng_seed = std::stoull(seed);
    long long n = parse_int(count);
    for (long long i = 0; i < n; ++i) {
      if (!std::getline(in, line)) throw Error("truncated scene");
      std::istringstream os(line);
      std::string id, name, x, y, th;
      os >> id >> name >> x >> y >> th;
      if (th.empty()) throw Error("bad object line: " + line);
      SimObject o;
      o.id = static_cast<int>(parse_int(id));
      o.shape = find_shape(library, name);
      o.pose = {parse_double(x), parse_double(y), parse_double(th)};
      s.objects.push_back(std::move(o));
    }
    if (n > 0 && !s.find(s.target_id)) throw Error("scene target id not among objects");
    out = std::move(s);
    return true;
  }
  return false;
}

inline Scene parse_scene(const std::string& text, const std::vector<ShapeSpec>& library) {
  std::istringstream in(text);
  Scene s;
  if (!read_scene(in, library, s)) throw Error("no scene in input");
  return s;
}

inline std::vector<Scene> parse_scenes(const std::string& text, const std::vector<ShapeSpec>& library) {
  std::istringstream in(text);
  std::vector<Scene> out;
  Scene s;
  while (read_scene(in, library, s)) out.push_back(s);
  return out;
}

}  // namespace pushgrasp
