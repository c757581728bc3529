#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "pcreg/geometry.hpp"
#include "pcreg/rng.hpp"

namespace pcreg::support {

inline PointMatrix random_points(Rng& rng, int n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  PointMatrix p(n, 3);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) p(i, j) = u(rng);
  }
  return p;
}

inline RigidTransform random_rigid(Rng& rng, double max_deg = 180.0, double max_t = 1.0) {
  return random_transform(rng, max_deg, max_t);
}

// Homogeneous-matrix reference built straight from quaternion components.
inline Mat4 homogeneous(const RigidTransform& t) {
  const double w = t.rotation.w, x = t.rotation.x, y = t.rotation.y, z = t.rotation.z;
  Mat4 m = Mat4::Identity();
  m(0, 0) = w * w + x * x - y * y - z * z;
  m(0, 1) = 2 * (x * y - w * z);
  m(0, 2) = 2 * (x * z + w * y);
  m(1, 0) = 2 * (x * y + w * z);
  m(1, 1) = w * w - x * x + y * y - z * z;
  m(1, 2) = 2 * (y * z - w * x);
  m(2, 0) = 2 * (x * z - w * y);
  m(2, 1) = 2 * (y * z + w * x);
  m(2, 2) = w * w - x * x - y * y + z * z;
  m.block<3, 1>(0, 3) = t.translation;
  return m;
}

inline Eigen::Vector4d lift(const Vec3& p) { return Eigen::Vector4d(p.x(), p.y(), p.z(), 1.0); }

inline double max_abs_diff(const Mat4& a, const Mat4& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline PointMatrix permute_rows(const PointMatrix& p, const std::vector<int>& perm) {
  PointMatrix out(p.rows(), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i) out.row(i) = p.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

inline std::vector<int> random_permutation(Rng& rng, int n) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace pcreg::support

#include <functional>

#include "pcreg/autograd.hpp"

namespace pcreg::support {

using DMat = ad::Matrix<double>;
using ScalarFn = std::function<ad::Var<double>(ad::Tape<double>&, const std::vector<ad::Var<double>>&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  int checked = 0;
};

/// Central differences against reverse-mode gradients. Every coordinate is
/// checked unless `max_per_input` limits it to a random sample.
inline GradCheck check_gradients(const ScalarFn& fn, const std::vector<DMat>& inputs, double step = 1e-6,
                                 int max_per_input = -1, std::uint64_t seed = 0, double floor = 1e-4) {
  ad::Tape<double> tape;
  std::vector<ad::Var<double>> vars;
  for (const auto& m : inputs) vars.push_back(tape.variable(m));
  const ad::Var<double> out = fn(tape, vars);
  tape.backward(out);
  std::vector<DMat> analytic;
  for (const auto& v : vars) analytic.push_back(tape.grad(v.id));

  auto eval = [&](const std::vector<DMat>& in) {
    ad::Tape<double> t;
    std::vector<ad::Var<double>> vs;
    for (const auto& m : in) vs.push_back(t.variable(m));
    return fn(t, vs).scalar();
  };
  GradCheck res;
  Rng rng(seed);
  std::vector<DMat> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(inputs[k].size()));
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<Eigen::Index>(i);
    if (max_per_input > 0 && static_cast<int>(coords.size()) > max_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(max_per_input));
    }
    for (Eigen::Index c : coords) {
      const double orig = work[k].data()[c];
      work[k].data()[c] = orig + step;
      const double up = eval(work);
      work[k].data()[c] = orig - step;
      const double down = eval(work);
      work[k].data()[c] = orig;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[k].data()[c];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      res.max_rel_error = std::max(res.max_rel_error, rel);
      ++res.checked;
    }
  }
  return res;
}

inline DMat random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  DMat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace pcreg::support
