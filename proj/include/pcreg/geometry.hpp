#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "pcreg/errors.hpp"
#include "pcreg/rng.hpp"

namespace pcreg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

inline constexpr double kDegPerRad = 180.0 / std::numbers::pi;

/// Scalar-first unit quaternion (w, x, y, z), right-handed rotations.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {}; }

  [[nodiscard]] double squared_norm() const { return w * w + x * x + y * y + z * z; }
  [[nodiscard]] double norm() const { return std::sqrt(squared_norm()); }
  [[nodiscard]] Eigen::Vector4d coeffs() const { return {w, x, y, z}; }
  [[nodiscard]] Quaternion operator-() const { return {-w, -x, -y, -z}; }

  friend bool operator==(const Quaternion&, const Quaternion&) = default;
};

/// Hamilton product a * b (rotation b applied first).
inline Quaternion quat_multiply(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

/// Flips q to the w >= 0 hemisphere. Exact ties at w == 0 keep the first
/// nonzero vector component positive so the operation stays idempotent.
inline Quaternion quat_canonicalize(const Quaternion& q) {
  if (q.w > 0.0) return q;
  if (q.w < 0.0) return -q;
  for (double c : {q.x, q.y, q.z}) {
    if (c > 0.0) return q;
    if (c < 0.0) return -q;
  }
  return q;
}

inline Quaternion quat_normalize(const Quaternion& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw DegenerateQuaternion("quat_normalize: quaternion has zero or non-finite norm");
  }
  return quat_canonicalize({q.w / n, q.x / n, q.y / n, q.z / n});
}

inline Mat3 quat_to_matrix(const Quaternion& q) {
  if (std::abs(q.norm() - 1.0) > 1e-4) {
    throw DegenerateQuaternion("quat_to_matrix: quaternion is not unit norm (|q| = " +
                               std::to_string(q.norm()) + ")");
  }
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),  //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

/// Shepperd's method; result is canonicalized.
inline Quaternion matrix_to_quat(const Mat3& r) {
  const double trace = r.trace();
  Quaternion q;
  if (trace > 0.0) {
    const double s = std::sqrt(trace + 1.0) * 2.0;
    q = {0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
    q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
  } else if (r(1, 1) > r(2, 2)) {
    const double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
    q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
  } else {
    const double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
    q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
  }
  return quat_normalize(q);
}

/// Rotation angle of a unit quaternion, in radians, in [0, pi].
inline double quat_angle(const Quaternion& q) {
  const double w = std::clamp(std::abs(q.w) / q.norm(), 0.0, 1.0);
  return 2.0 * std::acos(w);
}

/// Ordered set of 3D points, one point per row.
class PointCloud {
 public:
  PointCloud() = default;

  explicit PointCloud(PointMatrix points) : points_(std::move(points)) {
    if (points_.rows() < 1) throw InvalidArgument("PointCloud: at least one point is required");
    if (!points_.allFinite()) throw InvalidArgument("PointCloud: non-finite coordinate");
  }

  [[nodiscard]] Eigen::Index size() const { return points_.rows(); }
  [[nodiscard]] bool empty() const { return points_.rows() == 0; }
  [[nodiscard]] const PointMatrix& points() const { return points_; }
  [[nodiscard]] Vec3 point(Eigen::Index i) const { return points_.row(i).transpose(); }

  friend bool operator==(const PointCloud& a, const PointCloud& b) {
    return a.points_.rows() == b.points_.rows() && a.points_ == b.points_;
  }

 private:
  PointMatrix points_;
};

/// Rotation (unit quaternion) followed by translation: p -> R p + t.
struct RigidTransform {
  Quaternion rotation;
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  [[nodiscard]] Mat3 rotation_matrix() const { return quat_to_matrix(rotation); }

  [[nodiscard]] Mat4 homogeneous() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation_matrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  static RigidTransform from_matrix(const Mat3& r, const Vec3& t) { return {matrix_to_quat(r), t}; }
  static RigidTransform from_homogeneous(const Mat4& m) {
    return from_matrix(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
  }
};

/// Result applies b first, then a: R_a R_b, R_a t_b + t_a.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {quat_normalize(quat_multiply(a.rotation, b.rotation)),
          a.rotation_matrix() * b.translation + a.translation};
}

inline RigidTransform inverse(const RigidTransform& t) {
  const Quaternion conj = quat_canonicalize({t.rotation.w, -t.rotation.x, -t.rotation.y, -t.rotation.z});
  return {conj, -(quat_to_matrix(conj) * t.translation)};
}

inline Vec3 apply(const RigidTransform& t, const Vec3& p) { return t.rotation_matrix() * p + t.translation; }

inline PointMatrix apply(const RigidTransform& t, const PointMatrix& points) {
  const Mat3 r = t.rotation_matrix();
  PointMatrix out = points * r.transpose();
  out.rowwise() += t.translation.transpose();
  return out;
}

inline PointCloud apply(const RigidTransform& t, const PointCloud& cloud) {
  return PointCloud(apply(t, cloud.points()));
}

/// The transform that remains after `accumulated_pred` has been applied:
/// compose(residual, accumulated_pred) == gt.
inline RigidTransform residual_transform(const RigidTransform& gt, const RigidTransform& accumulated_pred) {
  return compose(gt, inverse(accumulated_pred));
}

inline Vec3 random_unit_vector(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    Vec3 v(normal(rng), normal(rng), normal(rng));
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

inline Quaternion axis_angle(const Vec3& axis, double angle_rad) {
  const Vec3 a = axis.normalized();
  const double s = std::sin(angle_rad / 2.0);
  return quat_normalize({std::cos(angle_rad / 2.0), a.x() * s, a.y() * s, a.z() * s});
}

/// Axis uniform on the sphere, angle uniform in [0, max_angle_deg], each
/// translation component uniform in [-max_translation, max_translation].
inline RigidTransform random_transform(Rng& rng, double max_angle_deg = 45.0, double max_translation = 0.5) {
  if (!(max_angle_deg >= 0.0 && max_angle_deg <= 180.0)) {
    throw InvalidArgument("random_transform: max_angle must lie in [0, 180]");
  }
  if (!(max_translation >= 0.0)) throw InvalidArgument("random_transform: max_translation must be nonnegative");
  const Vec3 axis = random_unit_vector(rng);
  std::uniform_real_distribution<double> angle_dist(0.0, max_angle_deg / kDegPerRad);
  const double angle = angle_dist(rng);
  std::uniform_real_distribution<double> trans_dist(-max_translation, max_translation);
  Vec3 t;
  for (int i = 0; i < 3; ++i) t[i] = trans_dist(rng);
  return {axis_angle(axis, angle), t};
}

}  // namespace pcreg
