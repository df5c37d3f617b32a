#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace hcg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kOrthonormalTol = 1e-9;

// Rigid transform in 3-D space. Rotation is stored as an orthonormal 3x3
// matrix with determinant +1; translation in meters.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

inline Pose identity_pose() { return Pose{}; }

inline Pose make_pose(const Mat3& rotation, const Vec3& translation) {
  return Pose{rotation, translation};
}

inline Pose translation_pose(double x, double y, double z) {
  return Pose{Mat3::Identity(), Vec3(x, y, z)};
}

inline Mat3 rot_z_matrix(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

inline Pose rot_z_pose(double angle) { return Pose{rot_z_matrix(angle), Vec3::Zero()}; }

inline bool is_valid_rotation(const Mat3& r, double tol = kOrthonormalTol) {
  const double ortho = (r.transpose() * r - Mat3::Identity()).norm();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

inline bool is_valid_pose(const Pose& p, double tol = kOrthonormalTol) {
  return is_valid_rotation(p.rotation, tol) && p.translation.allFinite();
}

// Composition a∘b: apply b first, then a.
inline Pose compose(const Pose& a, const Pose& b) {
  return Pose{a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline Pose inverse(const Pose& p) {
  const Mat3 rt = p.rotation.transpose();
  return Pose{rt, -(rt * p.translation)};
}

// Relative transform taking `from` to `to`: compose(relative(from, to), from) == to.
inline Pose relative(const Pose& from, const Pose& to) {
  return compose(to, inverse(from));
}

inline Vec3 transform_point(const Pose& p, const Vec3& x) {
  return p.rotation * x + p.translation;
}

inline std::vector<Vec3> transform_points(const Pose& p, const std::vector<Vec3>& pts) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const Vec3& x : pts) out.push_back(transform_point(p, x));
  return out;
}

// Predefined 3-D points on the gripper used by the point-matching pose loss.
// Fixed for the lifetime of a run.
struct GripperPoints {
  std::vector<Vec3> points;
};

// Palm at the origin, fingertips and knuckles at lateral +-0.04 m, along the
// approach axis at 0.10 m and 0.06 m. Spans translation and all rotation
// axes, so a zero loss implies the poses agree.
inline const GripperPoints& default_gripper_points() {
  static const GripperPoints g{{Vec3(0.0, 0.0, 0.0), Vec3(0.04, 0.0, 0.10),
                                Vec3(-0.04, 0.0, 0.10), Vec3(0.04, 0.0, 0.06),
                                Vec3(-0.04, 0.0, 0.06)}};
  return g;
}

// Point-matching loss: mean L1 displacement of the gripper points under the
// two transforms. Symmetric, non-negative, zero iff the poses agree on every
// point of xg.
inline double pose_loss(const Pose& t1, const Pose& t2, const GripperPoints& xg) {
  if (xg.points.empty()) throw std::invalid_argument("pose_loss: empty gripper point set");
  double total = 0.0;
  for (const Vec3& x : xg.points) {
    total += (transform_point(t1, x) - transform_point(t2, x)).lpNorm<1>();
  }
  return total / static_cast<double>(xg.points.size());
}

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

// Rodrigues formula: axis-angle 3-vector to rotation matrix.
inline Mat3 exp_map(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  if (theta < 1e-9) {
    return Mat3::Identity() + w + 0.5 * w * w;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * w + b * w * w;
}

struct NearSingularRotationError : std::runtime_error {
  NearSingularRotationError() : std::runtime_error("log_map: rotation angle too close to pi") {}
};

// Inverse of exp_map for rotations with angle < pi. Rotations with angle
// >= pi - 1e-6 are rejected as near-singular.
inline Vec3 log_map(const Mat3& r) {
  const double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  if (theta >= M_PI - 1e-6) throw NearSingularRotationError{};
  const Vec3 v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < 1e-9) return 0.5 * v;
  return (theta / (2.0 * std::sin(theta))) * v;
}

// Left Jacobian of SO(3); relates additive axis-angle perturbations to
// rotation perturbations, used for analytic gradients through exp_map.
inline Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  if (theta < 1e-7) {
    return Mat3::Identity() + 0.5 * w + (1.0 / 6.0) * w * w;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Mat3::Identity() + a * w + b * w * w;
}

// Expert action at step t: relative transform to the next waypoint.
inline Pose extract_expert_action(const std::vector<Pose>& plan, std::size_t t) {
  if (t + 1 >= plan.size()) throw std::out_of_range("extract_expert_action: index out of range");
  return relative(plan[t], plan[t + 1]);
}

// Expert goal at step t: relative transform to the final waypoint.
inline Pose extract_expert_goal(const std::vector<Pose>& plan, std::size_t t) {
  if (plan.empty() || t >= plan.size()) {
    throw std::out_of_range("extract_expert_goal: index out of range");
  }
  return relative(plan[t], plan.back());
}

// --- planar helpers ------------------------------------------------------
// The simulator restricts poses to the table plane: translation z = 0 and
// rotation about the z axis only.

inline Pose planar_pose(double x, double y, double yaw) {
  return Pose{rot_z_matrix(yaw), Vec3(x, y, 0.0)};
}

inline double pose_yaw(const Pose& p) {
  return std::atan2(p.rotation(1, 0) - p.rotation(0, 1), p.rotation(0, 0) + p.rotation(1, 1));
}

// (x, y, yaw) of a planar pose.
inline Vec3 planar_params(const Pose& p) {
  return Vec3(p.translation.x(), p.translation.y(), pose_yaw(p));
}

// Projects an arbitrary pose onto the planar constraint; idempotent.
inline Pose project_planar(const Pose& p) {
  return planar_pose(p.translation.x(), p.translation.y(), pose_yaw(p));
}

inline bool is_planar(const Pose& p, double tol = kOrthonormalTol) {
  const Pose q = project_planar(p);
  return std::abs(p.translation.z()) <= tol && (p.rotation - q.rotation).norm() <= tol;
}

inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

// --- serialization -------------------------------------------------------
// A pose serializes to 12 little-endian float64 values: the rotation in
// row-major order, then the translation.

inline void put_f64_le(double v, unsigned char* out) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
}

inline double get_f64_le(const unsigned char* in) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

inline std::array<unsigned char, 96> serialize_pose(const Pose& p) {
  std::array<unsigned char, 96> out{};
  int k = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) put_f64_le(p.rotation(i, j), out.data() + 8 * k++);
  for (int i = 0; i < 3; ++i) put_f64_le(p.translation(i), out.data() + 8 * k++);
  return out;
}

inline Pose deserialize_pose(const unsigned char* data) {
  Pose p;
  int k = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) p.rotation(i, j) = get_f64_le(data + 8 * k++);
  for (int i = 0; i < 3; ++i) p.translation(i) = get_f64_le(data + 8 * k++);
  if (!is_valid_pose(p, 1e-6)) throw std::runtime_error("deserialize_pose: invalid rotation");
  return p;
}

}  // namespace hcg
