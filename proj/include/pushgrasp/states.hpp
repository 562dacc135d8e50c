#pragma once

#include <Eigen/Core>

#include "pushgrasp/candidates.hpp"

namespace pushgrasp {

using StateMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kGraspStateRows = 345;
inline constexpr int kGripperRows = 145;
inline constexpr int kRegionRows = kGraspStateRows - kGripperRows;
inline constexpr int kGraspStateCols = 4;  // x, y, z, flag (0 gripper, 1 closing region)

inline constexpr int kPushStateRows = 1024;
inline constexpr int kPushSceneRows = kPushStateRows - 1;
inline constexpr int kPushStateCols = 6;  // x, y, z, push, target, other
inline constexpr int kPushTargetQuota = 256;

inline constexpr double kPushReferenceX = 0.5;
inline constexpr double kPushReferenceY = 0.0;
inline constexpr double kPushStroke = 0.125;

struct GraspState {
  StateMatrix rows = StateMatrix::Zero(kGraspStateRows, kGraspStateCols);
};

struct PushState {
  StateMatrix rows = StateMatrix::Zero(kPushStateRows, kPushStateCols);
};

namespace detail {

// Additive recurrence with the 3-d plastic constant; evenly spread and fixed.
inline Vec3 r3_point(std::size_t i) {
  constexpr double g = 1.2207440845057596;
  constexpr double a1 = 1.0 / g, a2 = 1.0 / (g * g), a3 = 1.0 / (g * g * g);
  auto frac = [](double v) { return v - std::floor(v); };
  double k = static_cast<double>(i) + 1.0;
  return {frac(0.5 + a1 * k), frac(0.5 + a2 * k), frac(0.5 + a3 * k)};
}

/// `count` points on the surface of `box`, uniform by area. Faces are indexed
/// (-x, +x, -y, +y, -z, +z); faces with `skip[f]` set are left empty.
inline void box_surface_points(const AlignedBox& box, std::size_t count, std::array<bool, 6> skip,
                               std::vector<Vec3>& out) {
  const Vec3 s = box.size();
  std::array<double, 6> area{};
  for (int f = 0; f < 6; ++f) {
    int axis = f / 2;
    area[f] = skip[f] ? 0.0 : s[(axis + 1) % 3] * s[(axis + 2) % 3];
  }
  double total = 0.0;
  for (double a : area) total += a;
  for (std::size_t i = 0; i < count; ++i) {
    Vec3 u = r3_point(i);
    double r = u.x() * total;
    int f = 0;
    while (f < 5 && (area[f] == 0.0 || r >= area[f])) {
      r -= area[f];
      ++f;
    }
    int axis = f / 2;
    Vec3 p;
    p[axis] = (f % 2 == 0) ? box.lo[axis] : box.hi[axis];
    p[(axis + 1) % 3] = box.lo[(axis + 1) % 3] + u.y() * s[(axis + 1) % 3];
    p[(axis + 2) % 3] = box.lo[(axis + 2) % 3] + u.z() * s[(axis + 2) % 3];
    out.push_back(p);
  }
}

}  // namespace detail

/// Virtual gripper cloud in the gripper frame: both fingers at the given
/// opening plus the palm, mirror-symmetric about y = 0. No randomness.
inline PointCloud gripper_template(const GripperSpec& gripper, int n_points, double width) {
  if (!(width > 0 && width <= gripper.max_opening + 1e-12)) throw Error("gripper_template: width out of range");
  if (n_points < 1) throw Error("gripper_template: n_points must be >= 1");
  const auto boxes = gripper_boxes(gripper, width);
  const std::size_t n = static_cast<std::size_t>(n_points);
  const std::size_t per_finger = static_cast<std::size_t>(std::lround(0.345 * static_cast<double>(n)));
  const std::size_t palm = n - 2 * per_finger;

  std::vector<Vec3> half;
  detail::box_surface_points(boxes.finger_pos, per_finger, {}, half);
  AlignedBox palm_half = boxes.palm;
  palm_half.lo.y() = 0.0;
  detail::box_surface_points(palm_half, palm / 2, {false, false, true, false, false, false}, half);

  PointCloud out;
  out.reserve(n);
  for (const auto& p : half) out.push_back(p, 0);
  for (const auto& p : half) out.push_back(Vec3(p.x(), -p.y(), p.z()), 0);
  if (palm % 2 == 1) out.push_back(Vec3(0.0, 0.0, boxes.palm.hi.z()), 0);
  return out;
}

/// Gripper-frame box covering the fingers, the gap between them and the palm.
inline AlignedBox closing_region_box(const GripperSpec& gripper, double width) {
  const auto b = gripper_boxes(gripper, width);
  return {b.palm.lo, Vec3(b.palm.hi.x(), b.palm.hi.y(), b.finger_pos.hi.z())};
}

/// Scene points inside the gripper envelope, expressed in the grasp frame.
inline PointCloud extract_closing_region(const PointCloud& scene_cloud, const GraspCandidate& grasp,
                                         const GripperSpec& gripper) {
  const AlignedBox box = closing_region_box(gripper, grasp.width);
  const Pose inv = grasp.pose.inverse();
  PointCloud out;
  for (std::size_t i = 0; i < scene_cloud.size(); ++i) {
    Vec3 q = inv.apply(scene_cloud.points[i]);
    if (box.contains(q)) out.push_back(q, scene_cloud.instance_ids[i]);
  }
  return out;
}

/// 145 gripper rows (flag 0) followed by 200 closing-region rows (flag 1).
/// With `no_gripper_pc` all 345 rows come from the closing region. An empty
/// region without the ablation repeats the gripper rows (flag 0), which leaves
/// a max-pooled encoding unchanged.
inline GraspState make_grasp_state(const PointCloud& scene_cloud, const GraspCandidate& grasp,
                                   const GripperSpec& gripper, std::uint64_t seed, bool no_gripper_pc = false) {
  const PointCloud region = extract_closing_region(scene_cloud, grasp, gripper);
  GraspState st;
  auto put = [&](int row, const Vec3& p, float flag) {
    st.rows(row, 0) = static_cast<float>(p.x());
    st.rows(row, 1) = static_cast<float>(p.y());
    st.rows(row, 2) = static_cast<float>(p.z());
    st.rows(row, 3) = flag;
  };
  if (no_gripper_pc) {
    if (region.empty()) throw Error("empty grasp state");
    auto idx = downsample_indices(region, kGraspStateRows, SampleMethod::random, seed);
    for (int r = 0; r < kGraspStateRows; ++r) put(r, region.points[idx[r]], 1.0f);
    return st;
  }
  const PointCloud grip = gripper_template(gripper, kGripperRows, grasp.width);
  for (int r = 0; r < kGripperRows; ++r) put(r, grip.points[r], 0.0f);
  if (region.empty()) {
    for (int r = 0; r < kRegionRows; ++r) put(kGripperRows + r, grip.points[r % kGripperRows], 0.0f);
    return st;
  }
  auto idx = downsample_indices(region, kRegionRows, SampleMethod::random, seed);
  for (int r = 0; r < kRegionRows; ++r) put(kGripperRows + r, region.points[idx[r]], 1.0f);
  return st;
}

/// Planar transform taking a push pose to the reference pose
/// (x' = 0.5, y' = 0, heading 0); z is left untouched.
inline Pose push_canonical_transform(const PushCandidate& push) {
  const double psi = heading(push.pose);
  Pose t;
  t.rotation = rot_z(-psi);
  Vec3 s(push.start.x(), push.start.y(), 0.0);
  t.translation = Vec3(kPushReferenceX, kPushReferenceY, 0.0) - t.rotation * s;
  return t;
}

/// Row 0 is the push point at the reference pose with label [1,0,0]; the
/// remaining 1023 rows are scene points in the canonical frame, at least 256
/// of them from the target ([0,1,0]), the rest from other objects ([0,0,1]).
inline PushState canonicalize_push(const PointCloud& scene_cloud, const PushCandidate& push, int target_id,
                                   std::uint64_t seed) {
  PointCloud target, others;
  const Pose t = push_canonical_transform(push);
  for (std::size_t i = 0; i < scene_cloud.size(); ++i) {
    Vec3 q = t.apply(scene_cloud.points[i]);
    if (scene_cloud.instance_ids[i] == target_id) target.push_back(q, target_id);
    else others.push_back(q, scene_cloud.instance_ids[i]);
  }
  if (target.empty()) throw Error("canonicalize_push: target not in cloud");
  std::size_t n_target = kPushSceneRows;
  if (!others.empty()) {
    double share = static_cast<double>(kPushSceneRows) * static_cast<double>(target.size()) /
                   static_cast<double>(target.size() + others.size());
    n_target = std::max<std::size_t>(kPushTargetQuota, static_cast<std::size_t>(std::lround(share)));
    n_target = std::max(n_target, kPushSceneRows - std::min<std::size_t>(others.size(), kPushSceneRows));
    n_target = std::min<std::size_t>(n_target, kPushSceneRows);
  }
  const std::size_t n_other = kPushSceneRows - n_target;

  PushState st;
  st.rows.row(0) << static_cast<float>(kPushReferenceX), static_cast<float>(kPushReferenceY),
      static_cast<float>(push.start.z()), 1.0f, 0.0f, 0.0f;
  int row = 1;
  auto put = [&](const Vec3& p, int label) {
    st.rows(row, 0) = static_cast<float>(p.x());
    st.rows(row, 1) = static_cast<float>(p.y());
    st.rows(row, 2) = static_cast<float>(p.z());
    st.rows(row, 3 + label) = 1.0f;
    ++row;
  };
  for (auto i : downsample_indices(target, n_target, SampleMethod::random, derive_seed(seed, 1))) put(target.points[i], 1);
  if (n_other > 0)
    for (auto i : downsample_indices(others, n_other, SampleMethod::random, derive_seed(seed, 2))) put(others.points[i], 2);
  return st;
}

// Binary state record: 16-byte header (magic "PGST", u16 version, u16 rows,
// u16 cols, u16 label, 4 reserved bytes) then rows*cols little-endian f32.
inline constexpr std::uint16_t kStateFormatVersion = 1;

inline void write_state(ByteWriter& w, const StateMatrix& rows, std::uint16_t label) {
  w.put_bytes("PGST");
  w.put<std::uint16_t>(kStateFormatVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(rows.rows()));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(rows.cols()));
  w.put<std::uint16_t>(label);
  w.put<std::uint32_t>(0);
  for (Eigen::Index r = 0; r < rows.rows(); ++r)
    for (Eigen::Index c = 0; c < rows.cols(); ++c) w.put<float>(rows(r, c));
}

inline StateMatrix read_state(ByteReader& r, std::uint16_t& label) {
  if (r.get_bytes(4) != "PGST") throw Error("bad state magic");
  if (r.get<std::uint16_t>() != kStateFormatVersion) throw Error("unsupported state version");
  auto rows = r.get<std::uint16_t>();
  auto cols = r.get<std::uint16_t>();
  label = r.get<std::uint16_t>();
  r.get<std::uint32_t>();
  StateMatrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = r.get<float>();
  return m;
}

}  // namespace pushgrasp
