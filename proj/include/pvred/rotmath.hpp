#pragma once

// Rotation algebra on exponential maps: quaternion conversion (the QT layer)
// with its analytic Jacobian, rotation matrices, and Z-Y-X Euler angles.

#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "pvred/error.hpp"

namespace pvred::rot {

/// Exponential map: direction is the rotation axis, norm the angle in radians.
using AxisAngle = Eigen::Vector3d;
/// Unit quaternion stored as (w, x, y, z).
using Quaternion = Eigen::Vector4d;
/// d(quaternion)/d(exponential map), 4x3.
using QtJacobian = Eigen::Matrix<double, 4, 3>;
using RotationMatrix = Eigen::Matrix3d;
/// Intrinsic Z-Y-X angles ordered (about z, about y', about x'').
using EulerZyx = Eigen::Vector3d;

/// Below this angle the closed forms divide by ~0; Taylor branches take over.
inline constexpr double kSmallAngle = 1e-6;
/// |R(3,1)| within this of 1 is treated as gimbal lock by the Euler extraction.
inline constexpr double kGimbalTolerance = 1e-9;

namespace detail {

inline void require_finite(const AxisAngle& e, const char* where) {
  if (!e.allFinite()) throw InvalidInput(std::string(where) + ": non-finite exponential map");
}

// sin(r/2)/r, the factor scaling e into the quaternion's vector part.
inline double half_sinc(double r) {
  if (r < kSmallAngle) return 0.5 - r * r / 48.0;
  return std::sin(0.5 * r) / r;
}

inline Eigen::Matrix3d skew(const Eigen::Vector3d& a) {
  Eigen::Matrix3d k;
  k << 0.0, -a.z(), a.y(),  //
      a.z(), 0.0, -a.x(),   //
      -a.y(), a.x(), 0.0;
  return k;
}

}  // namespace detail

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::remainder(a, two_pi);  // [-pi, pi]
  if (w <= -std::numbers::pi) w += two_pi;
  return w;
}

inline Quaternion expmap_to_quat(const AxisAngle& e) {
  detail::require_finite(e, "expmap_to_quat");
  const double r = e.norm();
  Quaternion q;
  q(0) = r < kSmallAngle ? 1.0 - r * r / 8.0 : std::cos(0.5 * r);
  q.tail<3>() = detail::half_sinc(r) * e;
  return q;
}

/// Analytic Jacobian of expmap_to_quat.
///
/// Top row is -0.5 sin(r/2) e_hat^T, the true derivative of cos(r/2). Rows 2-4
/// are 0.5 cos(r/2) E + sin(r/2)/r (I - E) with E = e_hat e_hat^T. Below
/// kSmallAngle both are replaced by their second-order expansions, which reduce
/// to (0, 0.5 I) at the origin.
inline QtJacobian expmap_to_quat_jacobian(const AxisAngle& e) {
  detail::require_finite(e, "expmap_to_quat_jacobian");
  const double r = e.norm();
  QtJacobian j;
  if (r < kSmallAngle) {
    const double s = 0.5 - r * r / 48.0;
    j.row(0) = -0.5 * s * e.transpose();
    j.bottomRows<3>() = s * Eigen::Matrix3d::Identity() - (1.0 / 24.0) * e * e.transpose();
    return j;
  }
  const Eigen::Vector3d unit = e / r;
  const Eigen::Matrix3d outer = unit * unit.transpose();
  const double half_sin = std::sin(0.5 * r);
  const double half_cos = std::cos(0.5 * r);
  j.row(0) = -0.5 * half_sin * unit.transpose();
  j.bottomRows<3>() = 0.5 * half_cos * outer + (half_sin / r) * (Eigen::Matrix3d::Identity() - outer);
  return j;
}

/// Rodrigues' formula.
inline RotationMatrix expmap_to_rotmat(const AxisAngle& e) {
  detail::require_finite(e, "expmap_to_rotmat");
  const double r = e.norm();
  const Eigen::Matrix3d k = detail::skew(e);
  if (r < kSmallAngle) return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  return Eigen::Matrix3d::Identity() + (std::sin(r) / r) * k + ((1.0 - std::cos(r)) / (r * r)) * k * k;
}

inline RotationMatrix quat_to_rotmat(const Quaternion& q) {
  if (!q.allFinite() || std::abs(q.norm() - 1.0) > 1e-6)
    throw InvalidInput("quat_to_rotmat: quaternion is not unit length");
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  RotationMatrix m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

/// R = Rz(a) Ry(b) Rx(c) for angles (a, b, c).
inline RotationMatrix euler_zyx_to_rotmat(const EulerZyx& angles) {
  const double ca = std::cos(angles(0)), sa = std::sin(angles(0));
  const double cb = std::cos(angles(1)), sb = std::sin(angles(1));
  const double cc = std::cos(angles(2)), sc = std::sin(angles(2));
  RotationMatrix m;
  m << ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc,  //
      sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc,   //
      -sb, cb * sc, cb * cc;
  return m;
}

/// Inverse of euler_zyx_to_rotmat. At gimbal lock the x'' angle is set to 0
/// and the whole remaining rotation is attributed to z.
inline EulerZyx rotmat_to_euler_zyx(const RotationMatrix& m) {
  EulerZyx out;
  const double s = m(2, 0);
  if (std::abs(std::abs(s) - 1.0) <= kGimbalTolerance) {
    out(1) = s < 0 ? 0.5 * std::numbers::pi : -0.5 * std::numbers::pi;
    out(2) = 0.0;
    out(0) = std::atan2(-m(0, 1), m(1, 1));
  } else {
    out(1) = std::atan2(-s, std::hypot(m(0, 0), m(1, 0)));
    out(2) = std::atan2(m(2, 1), m(2, 2));
    out(0) = std::atan2(m(1, 0), m(0, 0));
  }
  for (int i = 0; i < 3; ++i) out(i) = wrap_angle(out(i));
  return out;
}

inline EulerZyx expmap_to_euler(const AxisAngle& e) { return rotmat_to_euler_zyx(expmap_to_rotmat(e)); }

inline void require_pose_length(Eigen::Index len, const char* where) {
  if (len % 3 != 0) throw ShapeError(std::string(where) + ": pose length " + std::to_string(len) + " is not a multiple of 3");
}

/// The QT layer: per-joint expmap_to_quat, concatenated in joint order.
inline Eigen::VectorXd pose_qt(const Eigen::Ref<const Eigen::VectorXd>& pose) {
  require_pose_length(pose.size(), "pose_qt");
  const Eigen::Index joints = pose.size() / 3;
  Eigen::VectorXd out(4 * joints);
  for (Eigen::Index j = 0; j < joints; ++j) out.segment<4>(4 * j) = expmap_to_quat(pose.segment<3>(3 * j));
  return out;
}

/// Pulls a gradient w.r.t. pose_qt(pose) back to the pose, one 4x3 block per joint.
inline Eigen::VectorXd pose_qt_backward(const Eigen::Ref<const Eigen::VectorXd>& pose,
                                        const Eigen::Ref<const Eigen::VectorXd>& upstream) {
  require_pose_length(pose.size(), "pose_qt_backward");
  const Eigen::Index joints = pose.size() / 3;
  if (upstream.size() != 4 * joints)
    throw ShapeError("pose_qt_backward: upstream has " + std::to_string(upstream.size()) + " entries, expected " +
                     std::to_string(4 * joints));
  Eigen::VectorXd grad(pose.size());
  for (Eigen::Index j = 0; j < joints; ++j)
    grad.segment<3>(3 * j) = expmap_to_quat_jacobian(pose.segment<3>(3 * j)).transpose() * upstream.segment<4>(4 * j);
  return grad;
}

/// Per-joint Euler angles of a pose vector, same layout (3 per joint).
inline Eigen::VectorXd pose_to_euler(const Eigen::Ref<const Eigen::VectorXd>& pose) {
  require_pose_length(pose.size(), "pose_to_euler");
  Eigen::VectorXd out(pose.size());
  for (Eigen::Index j = 0; j < pose.size() / 3; ++j) out.segment<3>(3 * j) = expmap_to_euler(pose.segment<3>(3 * j));
  return out;
}

}  // namespace pvred::rot
