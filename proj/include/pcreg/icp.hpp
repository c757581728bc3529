#pragma once

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "pcreg/errors.hpp"
#include "pcreg/geometry.hpp"

namespace pcreg {

/// Static 3D k-d tree answering exact nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(const PointMatrix& points) : points_(points) {
    index_.resize(static_cast<std::size_t>(points_.rows()));
    std::iota(index_.begin(), index_.end(), Eigen::Index{0});
    nodes_.reserve(index_.size());
    if (!index_.empty()) build(0, index_.size(), 0);
  }

  struct Hit {
    Eigen::Index index = -1;
    double squared_distance = std::numeric_limits<double>::infinity();
  };

  [[nodiscard]] Hit nearest(const Vec3& q) const {
    Hit best;
    if (!nodes_.empty()) search(0, q, best);
    return best;
  }

 private:
  struct Node {
    Eigen::Index point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t lo, std::size_t hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(index_.begin() + static_cast<std::ptrdiff_t>(lo), index_.begin() + static_cast<std::ptrdiff_t>(mid),
                     index_.begin() + static_cast<std::ptrdiff_t>(hi), [&](Eigen::Index a, Eigen::Index b) {
                       const double va = points_(a, axis), vb = points_(b, axis);
                       return va < vb || (va == vb && a < b);
                     });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({index_[mid], axis, -1, -1});
    const int l = build(lo, mid, depth + 1);
    const int r = build(mid + 1, hi, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search(int id, const Vec3& q, Hit& best) const {
    const Node& n = nodes_[id];
    const double d2 = (points_.row(n.point).transpose() - q).squaredNorm();
    if (d2 < best.squared_distance || (d2 == best.squared_distance && n.point < best.index)) {
      best = {n.point, d2};
    }
    const double diff = q[n.axis] - points_(n.point, n.axis);
    const int near = diff <= 0 ? n.left : n.right;
    const int far = diff <= 0 ? n.right : n.left;
    if (near >= 0) search(near, q, best);
    if (far >= 0 && diff * diff <= best.squared_distance) search(far, q, best);
  }

  const PointMatrix& points_;
  std::vector<Eigen::Index> index_;
  std::vector<Node> nodes_;
};

struct KabschResult {
  RigidTransform transform;
  int rank = 0;             // numerical rank of the cross-covariance
  bool degenerate = false;  // rank < 2: rotation not determined
};

/// Least-squares rigid transform mapping p onto q (row-matched), with the
/// reflection guard det(R) = +1.
inline KabschResult kabsch(const PointMatrix& p, const PointMatrix& q) {
  if (p.rows() != q.rows()) throw ShapeError("kabsch: point sets differ in size");
  if (p.rows() < 3) throw InvalidArgument("kabsch: at least 3 matched points are required");
  const Eigen::RowVector3d cp = p.colwise().mean();
  const Eigen::RowVector3d cq = q.colwise().mean();
  const Mat3 h = (p.rowwise() - cp).transpose() * (q.rowwise() - cq);
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  KabschResult out;
  const double tol = std::max(s[0], 1e-300) * 1e-10;
  out.rank = static_cast<int>((s.array() > tol).count());
  if (s[0] <= 1e-300) out.rank = 0;
  out.degenerate = out.rank < 2;
  const Mat3 u = svd.matrixU(), v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = v * d * u.transpose();
  const Vec3 t = cq.transpose() - r * cp.transpose();
  out.transform = RigidTransform::from_matrix(r, t);
  return out;
}

struct IcpConfig {
  int max_iterations = 50;
  double convergence_tol = 1e-6;
  double max_correspondence_distance = std::numeric_limits<double>::infinity();

  void validate() const {
    if (max_iterations < 1) throw ConfigError("icp: max_iterations must be positive");
    if (!(convergence_tol > 0.0)) throw ConfigError("icp: convergence_tol must be positive");
    if (!(max_correspondence_distance > 0.0)) throw ConfigError("icp: max_correspondence_distance must be positive");
  }
};

struct IcpResult {
  RigidTransform transform;
  int iterations = 0;
  double final_mean_residual = 0.0;  // mean squared nearest-neighbour distance
  std::vector<double> residual_history;
  bool converged = false;
  bool degenerate = false;
};

/// Point-to-point ICP: nearest-neighbour correspondences followed by a
/// closed-form Kabsch update, until the transform change falls below the
/// tolerance.
inline IcpResult icp(const PointCloud& source, const PointCloud& reference, const RigidTransform& init,
                     const IcpConfig& cfg = {}) {
  cfg.validate();
  if (source.size() < 3 || reference.size() < 3) throw InvalidArgument("icp: clouds need at least 3 points");
  const KdTree tree(reference.points());
  const double max_d2 = cfg.max_correspondence_distance * cfg.max_correspondence_distance;

  struct Matches {
    PointMatrix src, ref;
    double mse = 0.0;
  };
  auto match = [&](const RigidTransform& t) {
    const PointMatrix moved = apply(t, source.points());
    std::vector<Eigen::Index> si, ri;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < moved.rows(); ++i) {
      const auto hit = tree.nearest(moved.row(i).transpose());
      if (hit.squared_distance > max_d2) continue;
      si.push_back(i);
      ri.push_back(hit.index);
      sum += hit.squared_distance;
    }
    Matches m;
    m.src.resize(static_cast<Eigen::Index>(si.size()), 3);
    m.ref.resize(static_cast<Eigen::Index>(si.size()), 3);
    for (std::size_t k = 0; k < si.size(); ++k) {
      m.src.row(static_cast<Eigen::Index>(k)) = source.points().row(si[k]);
      m.ref.row(static_cast<Eigen::Index>(k)) = reference.points().row(ri[k]);
    }
    m.mse = si.empty() ? std::numeric_limits<double>::infinity() : sum / static_cast<double>(si.size());
    return m;
  };

  IcpResult res;
  res.transform = init;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const Matches m = match(res.transform);
    res.residual_history.push_back(m.mse);
    res.iterations = it;
    if (m.src.rows() < 3) {
      res.degenerate = true;
      break;
    }
    const KabschResult k = kabsch(m.src, m.ref);
    if (k.degenerate) {
      res.degenerate = true;
      break;
    }
    const double change = quat_angle(quat_multiply(k.transform.rotation, inverse(res.transform).rotation)) +
                          (k.transform.translation - res.transform.translation).norm();
    res.transform = k.transform;
    if (change < cfg.convergence_tol) {
      res.converged = true;
      break;
    }
  }
  res.final_mean_residual = match(res.transform).mse;
  res.residual_history.push_back(res.final_mean_residual);
  return res;
}

}  // namespace pcreg
