#include <gtest/gtest.h>

#include <random>

#include "pushgrasp/states.hpp"

using namespace pushgrasp;

namespace {

Scene one_box_scene(double lx, double ly, double h, double x = 0.5, double y = 0.0) {
  Scene s;
  SimObject o;
  o.id = 1;
  o.shape = make_shape("box", rectangle(lx, ly), h);
  o.pose = {x, y, 0.0};
  s.objects.push_back(o);
  s.target_id = 1;
  return s;
}

Pose random_planar_motion(Rng& rng) {
  std::uniform_real_distribution<double> a(-kPi, kPi), t(-0.3, 0.3);
  return planar_pose(t(rng), t(rng), a(rng));
}

PushCandidate moved(const PushCandidate& p, const Pose& g) {
  PushCandidate q;
  q.pose = g * p.pose;
  q.start = g.apply(p.start);
  return q;
}

GraspCandidate moved(const GraspCandidate& c, const Pose& g) {
  GraspCandidate q = c;
  q.pose = g * c.pose;
  return q;
}

}  // namespace

TEST(GripperTemplate, ExactCountAndDeterminism) {
  const GripperSpec g;
  for (int n : {1, 2, 3, 145, 146, 345}) {
    const auto a = gripper_template(g, n, 0.06);
    const auto b = gripper_template(g, n, 0.06);
    ASSERT_EQ(static_cast<int>(a.size()), n);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.points[i], b.points[i]);
  }
  EXPECT_THROW(gripper_template(g, 145, 0.0), Error);
  EXPECT_THROW(gripper_template(g, 145, 0.11), Error);
}

TEST(GripperTemplate, MirrorSymmetricAboutClosingPlane) {
  const auto t = gripper_template(GripperSpec{}, 145, 0.07);
  for (const auto& p : t.points) {
    const Vec3 m(p.x(), -p.y(), p.z());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : t.points) best = std::min(best, (q - m).norm());
    EXPECT_LT(best, 1e-9);
  }
}

TEST(GripperTemplate, InnerFingerFacesAtHalfWidth) {
  const GripperSpec g;
  const auto t = gripper_template(g, 145, 0.10);
  const double root = -g.finger_length / 2;
  double inner = std::numeric_limits<double>::infinity();
  int fingers = 0;
  for (const auto& p : t.points) {
    EXPECT_LE(std::abs(p.x()), g.finger_height / 2 + 1e-12);
    EXPECT_LE(std::abs(p.y()), 0.05 + g.finger_thickness + 1e-12);
    EXPECT_GE(p.z(), root - g.palm_depth - 1e-12);
    EXPECT_LE(p.z(), g.finger_length / 2 + 1e-12);
    if (p.z() > root + 1e-9) {
      ++fingers;
      inner = std::min(inner, std::abs(p.y()));
    }
  }
  EXPECT_GT(fingers, 50);
  EXPECT_NEAR(inner, 0.05, 1e-9);
}

TEST(ClosingRegion, MatchesPointInBoxOracle) {
  const GripperSpec g;
  const Scene s = one_box_scene(0.04, 0.06, 0.05);
  const PointCloud cloud = render_cloud(s, 800, 0.0, 4);
  const auto cands = sample_grasps(cloud.with_id(1), g, 64);
  ASSERT_FALSE(cands.empty());
  for (const auto& c : cands) {
    const PointCloud region = extract_closing_region(cloud, c, g);
    std::size_t want = 0;
    for (const auto& p : cloud.points) {
      const Vec3 q = c.pose.rotation.transpose() * (p - c.pose.translation);
      want += std::abs(q.x()) <= g.finger_height / 2 && std::abs(q.y()) <= c.width / 2 + g.finger_thickness &&
              q.z() >= -g.finger_length / 2 - g.palm_depth && q.z() <= g.finger_length / 2;
    }
    EXPECT_EQ(region.size(), want);
    for (int id : region.instance_ids) EXPECT_EQ(id, 1);
  }
  // The centred candidate holds every surface point of the box between the
  // fingers: the box is narrower than the finger band only along x.
  const auto& c0 = cands[0];
  const PointCloud region = extract_closing_region(cloud, c0, g);
  std::size_t between = 0;
  for (const auto& p : cloud.points) {
    const Vec3 q = c0.pose.rotation.transpose() * (p - c0.pose.translation);
    between += std::abs(q.x()) <= g.finger_height / 2 && std::abs(q.y()) < c0.width / 2 &&
               q.z() <= g.finger_length / 2 && q.z() >= -g.finger_length / 2;
  }
  EXPECT_GE(region.size(), between);
  EXPECT_GT(between, 0u);
}

TEST(ClosingRegion, ExcludesPointsBeyondFingertipsAndEmptyIsValid) {
  const GripperSpec g;
  GraspCandidate c;
  c.pose = {top_down_rotation(0.3), Vec3(0.5, 0.0, 0.03)};
  c.width = 0.06;
  PointCloud cloud;
  cloud.push_back(c.pose.apply(Vec3(0, 0, g.finger_length / 2 - 1e-4)), 2);
  cloud.push_back(c.pose.apply(Vec3(0, 0, g.finger_length / 2 + 1e-3)), 3);
  cloud.push_back(c.pose.apply(Vec3(g.finger_height / 2 + 1e-3, 0, 0)), 4);
  const auto r = extract_closing_region(cloud, c, g);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r.instance_ids[0], 2);
  EXPECT_NEAR(r.points[0].z(), g.finger_length / 2 - 1e-4, 1e-12);
  EXPECT_TRUE(extract_closing_region(PointCloud{}, c, g).empty());
}

TEST(GraspState, LayoutAndFlags) {
  const GripperSpec g;
  const Scene s = generate_scene(8, default_shape_library(), 3);
  const PointCloud cloud = render_cloud(s, 512, 0.002, 3);
  const auto cands = sample_grasps(cloud.with_id(s.target_id), g, 64);
  ASSERT_FALSE(cands.empty());
  const GraspState st = make_grasp_state(cloud, cands[0], g, 9);
  ASSERT_EQ(st.rows.rows(), 345);
  ASSERT_EQ(st.rows.cols(), 4);
  for (int r = 0; r < 345; ++r) EXPECT_EQ(st.rows(r, 3), r < 145 ? 0.0f : 1.0f) << r;
  const auto tmpl = gripper_template(g, 145, cands[0].width);
  for (int r = 0; r < 145; ++r)
    for (int k = 0; k < 3; ++k) EXPECT_EQ(st.rows(r, k), static_cast<float>(tmpl.points[r][k]));
  const PointCloud region = extract_closing_region(cloud, cands[0], g);
  for (int r = 145; r < 345; ++r) {
    bool found = false;
    for (const auto& p : region.points)
      found |= std::abs(p.x() - st.rows(r, 0)) < 1e-7 && std::abs(p.y() - st.rows(r, 1)) < 1e-7 &&
               std::abs(p.z() - st.rows(r, 2)) < 1e-7;
    EXPECT_TRUE(found) << r;
  }
}

TEST(GraspState, GripperRowsIndependentOfScene) {
  const GripperSpec g;
  GraspCandidate c;
  c.pose = {top_down_rotation(0.1), Vec3(0.5, 0.0, 0.03)};
  c.width = 0.05;
  const auto a = render_cloud(one_box_scene(0.03, 0.05, 0.05), 512, 0.0, 1);
  const auto b = render_cloud(generate_scene(8, default_shape_library(), 77), 512, 0.002, 2);
  const auto sa = make_grasp_state(a, c, g, 1), sb = make_grasp_state(b, c, g, 2);
  EXPECT_TRUE(sa.rows.topRows(145) == sb.rows.topRows(145));
}

TEST(GraspState, RigidMotionOfSceneAndGraspLeavesStateUnchanged) {
  const GripperSpec g;
  Rng rng(12);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = generate_scene(8, default_shape_library(), seed);
    const PointCloud cloud = render_cloud(s, 512, 0.002, seed);
    const auto cands = sample_grasps(cloud.with_id(s.target_id), g, 8);
    const Pose m = random_planar_motion(rng);
    const PointCloud moved_cloud = transform_cloud(cloud, m);
    for (const auto& c : cands) {
      const auto a = make_grasp_state(cloud, c, g, 5), b = make_grasp_state(moved_cloud, moved(c, m), g, 5);
      EXPECT_LT((a.rows - b.rows).cwiseAbs().maxCoeff(), 1e-6f);
    }
  }
}

TEST(GraspState, AblationUsesRegionOnly) {
  const GripperSpec g;
  const Scene s = one_box_scene(0.04, 0.06, 0.05);
  const PointCloud cloud = render_cloud(s, 512, 0.0, 1);
  const auto cands = sample_grasps(cloud, g, 4);
  ASSERT_FALSE(cands.empty());
  const auto st = make_grasp_state(cloud, cands[0], g, 3, true);
  ASSERT_EQ(st.rows.rows(), 345);
  for (int r = 0; r < 345; ++r) EXPECT_EQ(st.rows(r, 3), 1.0f);
  GraspCandidate far = cands[0];
  far.pose.translation += Vec3(0.2, 0.0, 0.0);
  EXPECT_THROW(make_grasp_state(cloud, far, g, 3, true), Error);
  // Without the ablation an empty region still yields a valid state.
  const auto empty = make_grasp_state(cloud, far, g, 3);
  for (int r = 0; r < 345; ++r) EXPECT_EQ(empty.rows(r, 3), 0.0f);
}

TEST(PushCanonical, ReferencePoseIsIdentity) {
  PushCandidate p;
  p.start = Vec3(0.5, 0.0, 0.02);
  p.pose = push_frame(p.start, Vec2(0.6, 0.0));
  const Pose t = push_canonical_transform(p);
  EXPECT_LT((t.rotation - Rot3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(t.translation.norm(), 1e-15);
  const Scene s = generate_scene(8, default_shape_library(), 5);
  const PointCloud cloud = render_cloud(s, 200, 0.0, 5);
  const PushState st = canonicalize_push(cloud, p, s.target_id, 1);
  for (int r = 1; r < kPushStateRows; ++r) {
    bool found = false;
    for (const auto& q : cloud.points)
      found |= std::abs(q.x() - st.rows(r, 0)) < 1e-7 && std::abs(q.y() - st.rows(r, 1)) < 1e-7 &&
               std::abs(q.z() - st.rows(r, 2)) < 1e-7;
    ASSERT_TRUE(found) << r;
  }
}

TEST(PushCanonical, QuarterTurnExample) {
  PushCandidate p;
  p.start = Vec3(0.2, 0.1, 0.05);
  p.pose = push_frame(p.start, Vec2(0.2, 0.3));  // heading +90 degrees
  const Pose t = push_canonical_transform(p);
  // Relative offset (dx, dy) rotated by -90 degrees is (dy, -dx), then shifted to (0.5, 0).
  EXPECT_LT((t.apply(Vec3(0.2, 0.1, 0.05)) - Vec3(0.5, 0.0, 0.05)).norm(), 1e-12);
  EXPECT_LT((t.apply(Vec3(0.2, 0.2, 0.01)) - Vec3(0.6, 0.0, 0.01)).norm(), 1e-12);
  EXPECT_LT((t.apply(Vec3(0.3, 0.1, 0.0)) - Vec3(0.5, -0.1, 0.0)).norm(), 1e-12);
  EXPECT_LT(((t * p.pose).rotation.col(0) - Vec3(1, 0, 0)).norm(), 1e-12);
  PointCloud cloud;
  cloud.push_back(Vec3(0.2, 0.2, 0.01), 1);
  cloud.push_back(Vec3(0.3, 0.1, 0.0), 2);
  const PushState st = canonicalize_push(cloud, p, 1, 0);
  EXPECT_EQ(st.rows(0, 0), 0.5f);
  EXPECT_EQ(st.rows(0, 1), 0.0f);
  EXPECT_EQ(st.rows(0, 2), 0.05f);
  bool saw_target = false, saw_other = false;
  for (int r = 1; r < kPushStateRows; ++r) {
    if (st.rows(r, 4) == 1.0f) {
      saw_target = true;
      EXPECT_NEAR(st.rows(r, 0), 0.6f, 1e-7);
      EXPECT_NEAR(st.rows(r, 1), 0.0f, 1e-7);
    } else {
      saw_other = true;
      EXPECT_NEAR(st.rows(r, 0), 0.5f, 1e-7);
      EXPECT_NEAR(st.rows(r, 1), -0.1f, 1e-7);
    }
  }
  EXPECT_TRUE(saw_target && saw_other);
}

TEST(PushCanonical, LabelsAndTargetQuota) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = generate_scene(30, default_shape_library(), seed, {0.12, 0.1});
    const PointCloud cloud = render_cloud(s, 512, 0.002, seed);
    const auto pushes = sample_pushes(cloud.with_id(s.target_id));
    ASSERT_FALSE(pushes.empty());
    const PushState st = canonicalize_push(cloud, pushes[0], s.target_id, seed);
    ASSERT_EQ(st.rows.rows(), 1024);
    ASSERT_EQ(st.rows.cols(), 6);
    EXPECT_EQ(st.rows(0, 0), 0.5f);
    EXPECT_EQ(st.rows(0, 1), 0.0f);
    EXPECT_EQ(st.rows(0, 2), static_cast<float>(pushes[0].start.z()));
    int push_rows = 0, target_rows = 0;
    for (int r = 0; r < 1024; ++r) {
      const float l1 = st.rows(r, 3), l2 = st.rows(r, 4), l3 = st.rows(r, 5);
      EXPECT_EQ(l1 + l2 + l3, 1.0f);
      for (float l : {l1, l2, l3}) EXPECT_TRUE(l == 0.0f || l == 1.0f);
      push_rows += l1 == 1.0f;
      target_rows += l2 == 1.0f;
    }
    EXPECT_EQ(push_rows, 1);
    EXPECT_EQ(st.rows(0, 3), 1.0f);
    EXPECT_GE(target_rows, kPushTargetQuota);
  }
  PointCloud others;
  others.push_back(Vec3(0.5, 0, 0), 2);
  PushCandidate p;
  p.start = Vec3(0.4, 0, 0.01);
  p.pose = push_frame(p.start, Vec2(0.5, 0));
  EXPECT_THROW(canonicalize_push(others, p, 1, 0), Error);
}

TEST(PushCanonical, InvariantUnderPlanarMotions) {
  Rng rng(99);
  const Scene s = generate_scene(10, default_shape_library(), 17);
  const PointCloud cloud = render_cloud(s, 512, 0.002, 17);
  const auto pushes = sample_pushes(cloud.with_id(s.target_id));
  ASSERT_FALSE(pushes.empty());
  for (int trial = 0; trial < 100; ++trial) {
    const Pose m = random_planar_motion(rng);
    const auto& p = pushes[static_cast<std::size_t>(trial) % pushes.size()];
    const PushState a = canonicalize_push(cloud, p, s.target_id, 42);
    const PushState b = canonicalize_push(transform_cloud(cloud, m), moved(p, m), s.target_id, 42);
    EXPECT_LE((a.rows - b.rows).cwiseAbs().maxCoeff(), 1e-6f) << "trial " << trial;
  }
}

TEST(StateRecord, BinaryRoundTripIsBitExact) {
  const Scene s = generate_scene(8, default_shape_library(), 2);
  const PointCloud cloud = render_cloud(s, 300, 0.002, 2);
  const auto pushes = sample_pushes(cloud.with_id(s.target_id));
  const PushState st = canonicalize_push(cloud, pushes[0], s.target_id, 7);
  ByteWriter w;
  write_state(w, st.rows, 1);
  ASSERT_EQ(w.bytes().size(), 16u + 1024u * 6u * 4u);
  EXPECT_EQ(std::string(w.bytes().data(), 4), "PGST");
  ByteReader r(w.bytes());
  std::uint16_t label = 0;
  const StateMatrix back = read_state(r, label);
  EXPECT_EQ(label, 1);
  ASSERT_EQ(back.rows(), st.rows.rows());
  EXPECT_EQ(std::memcmp(back.data(), st.rows.data(), sizeof(float) * back.size()), 0);
  ByteWriter w2;
  write_state(w2, back, label);
  EXPECT_EQ(w.bytes(), w2.bytes());
  std::vector<char> bad = w.bytes();
  bad[0] = 'X';
  ByteReader rb(bad);
  EXPECT_THROW(read_state(rb, label), Error);
}
