#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <tuple>
#include <vector>

#include "pcreg/errors.hpp"
#include "pcreg/geometry.hpp"

namespace pcreg {

/// Intrinsic Z-Y-X (yaw, pitch, roll) Euler angles in degrees, returned in
/// axis order (x = roll, y = pitch, z = yaw).
inline std::array<double, 3> euler_zyx_deg(const Mat3& r) {
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  return {roll * kDegPerRad, pitch * kDegPerRad, yaw * kDegPerRad};
}

inline double wrap_degrees(double a) {
  a = std::fmod(a + 180.0, 360.0);
  if (a <= 0.0) a += 360.0;
  return a - 180.0;
}

struct SampleErrors {
  std::array<double, 3> rotation_deg{};  // signed per-axis Euler differences (x, y, z)
  std::array<double, 3> translation{};   // signed per-axis differences
  double error_r_deg = 0.0;              // isotropic rotation error
  double error_t = 0.0;                  // isotropic translation error
  bool gimbal_degenerate = false;
};

struct AnisotropicErrors {
  std::array<double, 3> rotation_deg{};
  std::array<double, 3> translation{};
  bool gimbal_degenerate = false;
};

inline AnisotropicErrors anisotropic_errors(const RigidTransform& pred, const RigidTransform& gt) {
  AnisotropicErrors e;
  const auto ep = euler_zyx_deg(pred.rotation_matrix());
  const auto eg = euler_zyx_deg(gt.rotation_matrix());
  for (int i = 0; i < 3; ++i) {
    e.rotation_deg[i] = wrap_degrees(ep[i] - eg[i]);
    e.translation[i] = pred.translation[i] - gt.translation[i];
  }
  e.gimbal_degenerate = 90.0 - std::abs(eg[1]) < 1e-6;
  return e;
}

/// Relative rotation angle (degrees) and translation distance.
inline std::pair<double, double> isotropic_errors(const RigidTransform& pred, const RigidTransform& gt) {
  const Mat3 rel = gt.rotation_matrix().transpose() * pred.rotation_matrix();
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return {std::acos(c) * kDegPerRad, (pred.translation - gt.translation).norm()};
}

inline SampleErrors sample_errors(const RigidTransform& pred, const RigidTransform& gt) {
  SampleErrors s;
  const auto an = anisotropic_errors(pred, gt);
  s.rotation_deg = an.rotation_deg;
  s.translation = an.translation;
  s.gimbal_degenerate = an.gimbal_degenerate;
  std::tie(s.error_r_deg, s.error_t) = isotropic_errors(pred, gt);
  return s;
}

inline double rmse(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("rmse: no values");
  double sq = 0.0;
  for (double v : values) sq += v * v;
  return std::sqrt(sq / static_cast<double>(values.size()));
}

inline double mae(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("mae: no values");
  double s = 0.0;
  for (double v : values) s += std::abs(v);
  return s / static_cast<double>(values.size());
}

struct MetricsReport {
  double rmse_r = 0.0;  // degrees, over all axis-samples
  double mae_r = 0.0;
  double rmse_t = 0.0;
  double mae_t = 0.0;
  double error_r = 0.0;  // mean isotropic rotation error, degrees
  double error_t = 0.0;
  std::size_t count = 0;
  std::size_t gimbal_degenerate = 0;
  std::vector<SampleErrors> samples;
};

inline MetricsReport aggregate(const std::vector<SampleErrors>& samples) {
  if (samples.empty()) throw InvalidArgument("aggregate: no samples");
  std::vector<double> rot, trans;
  MetricsReport r;
  for (const auto& s : samples) {
    rot.insert(rot.end(), s.rotation_deg.begin(), s.rotation_deg.end());
    trans.insert(trans.end(), s.translation.begin(), s.translation.end());
    r.error_r += s.error_r_deg;
    r.error_t += s.error_t;
    if (s.gimbal_degenerate) ++r.gimbal_degenerate;
  }
  r.count = samples.size();
  r.rmse_r = rmse(rot);
  r.mae_r = mae(rot);
  r.rmse_t = rmse(trans);
  r.mae_t = mae(trans);
  r.error_r /= static_cast<double>(r.count);
  r.error_t /= static_cast<double>(r.count);
  r.samples = samples;
  return r;
}

}  // namespace pcreg
