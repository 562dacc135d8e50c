#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "pushgrasp/common.hpp"

namespace pushgrasp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Rot3 = Eigen::Matrix3d;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline Rot3 rot_z(double theta) {
  return Eigen::AngleAxisd(theta, Vec3::UnitZ()).toRotationMatrix();
}

inline bool is_rotation(const Rot3& r, double tol = 1e-9) {
  return (r.transpose() * r - Rot3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

/// Rigid transform p -> rotation * p + translation.
struct Pose {
  Rot3 rotation = Rot3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// (*this * other).apply(p) == apply(other.apply(p))
  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  Vec3 x_axis() const { return rotation.col(0); }
  Vec3 y_axis() const { return rotation.col(1); }
  Vec3 z_axis() const { return rotation.col(2); }
};

/// Rotation about world z by theta followed by translation (x, y, z).
inline Pose planar_pose(double x, double y, double theta, double z = 0.0) {
  return {rot_z(theta), Vec3(x, y, z)};
}

/// Heading of the x-axis of a pose projected on the XY plane.
inline double heading(const Pose& p) { return std::atan2(p.rotation(1, 0), p.rotation(0, 0)); }

}  // namespace pushgrasp
