#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace votepose {

using Vec3f = Eigen::Vector3f;
using Vec3d = Eigen::Vector3d;
using Mat3d = Eigen::Matrix3d;

/// Rigid transform in camera-from-object convention: p_cam = R * p_obj + t.
/// Translation is in millimeters.
struct RigidTransform {
  Mat3d rotation = Mat3d::Identity();
  Vec3d translation = Vec3d::Zero();

  Vec3d apply(const Vec3d& p) const { return rotation * p + translation; }
  Vec3f apply(const Vec3f& p) const {
    return (rotation * p.cast<double>() + translation).cast<float>();
  }

  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }

  RigidTransform operator*(const RigidTransform& rhs) const {
    RigidTransform out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  // Orthonormal with det +1, both within eps.
  bool is_valid(double eps = 1e-9) const {
    Mat3d err = rotation.transpose() * rotation - Mat3d::Identity();
    if (err.cwiseAbs().maxCoeff() > eps) return false;
    return std::abs(rotation.determinant() - 1.0) <= eps;
  }

  static RigidTransform identity() { return RigidTransform{}; }

  static RigidTransform rot_x(double rad) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(rad, Vec3d::UnitX()).toRotationMatrix();
    return t;
  }
  static RigidTransform rot_y(double rad) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(rad, Vec3d::UnitY()).toRotationMatrix();
    return t;
  }
  static RigidTransform rot_z(double rad) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(rad, Vec3d::UnitZ()).toRotationMatrix();
    return t;
  }
};

inline double deg2rad(double d) { return d * M_PI / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / M_PI; }

/// Angle in radians between two vectors, robust near 0 and pi.
inline double angle_between(const Vec3d& a, const Vec3d& b) {
  double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  double c = a.dot(b) / (na * nb);
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c);
}

/// Total rotation angle of R, in radians.
inline double rotation_angle(const Mat3d& r) {
  double c = (r.trace() - 1.0) * 0.5;
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c);
}

}  // namespace votepose
