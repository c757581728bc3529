#pragma once

#include <Eigen/Core>
#include <random>
#include <vector>

#include "pcreg/autograd.hpp"
#include "pcreg/errors.hpp"
#include "pcreg/geometry.hpp"
#include "pcreg/rng.hpp"

namespace pcreg {

struct LossConfig {
  double delta = 0.01;    // triplet margin
  double lambda_t = 4.0;  // translation weight in the parameter loss
  double beta = 1e-3;     // weight of the transformation sensitivity loss
  double gamma = 1e-3;    // weight of the feature dropout loss
  double dropout_ratio = 0.3;
  /// Use max(d_pos - d_neg + delta, 0) instead of the default
  /// max(d_pos - d_neg + delta, d_pos).
  bool tsl_hinge_at_zero = false;
  /// Drop individual feature entries instead of whole point rows.
  bool dropout_per_element = false;

  void validate() const {
    if (delta < 0 || lambda_t < 0 || beta < 0 || gamma < 0) throw ConfigError("loss: weights must be nonnegative");
    if (!(dropout_ratio >= 0.0 && dropout_ratio < 1.0)) throw ConfigError("loss: dropout_ratio must lie in [0, 1)");
  }
};

/// Target sign chosen to minimize the l1 distance to `pred` (q and -q are
/// the same rotation).
inline Quaternion align_hemisphere(const Quaternion& target, const Eigen::Vector4d& pred) {
  const Eigen::Vector4d t = target.coeffs();
  return (pred - t).cwiseAbs().sum() <= (pred + t).cwiseAbs().sum() ? target : -target;
}

/// |q - q_gt|_1 + lambda * ||t - t_gt||_2 on a tape.
template <typename S>
ad::Var<S> param_loss(ad::Var<S> q, ad::Var<S> t, const RigidTransform& target, double lambda_t) {
  ad::Tape<S>& tape = *q.tape;
  const Eigen::Vector4d qp = q.value().row(0).template cast<double>().transpose();
  const Quaternion aligned = align_hemisphere(target.rotation, qp);
  ad::Matrix<S> qt(1, 4);
  qt << static_cast<S>(aligned.w), static_cast<S>(aligned.x), static_cast<S>(aligned.y), static_cast<S>(aligned.z);
  ad::Matrix<S> tt = target.translation.transpose().template cast<S>();
  ad::Var<S> rot = ad::l1_norm(ad::sub(q, tape.constant(std::move(qt))));
  ad::Var<S> trans = ad::l2_norm(ad::sub(t, tape.constant(std::move(tt))));
  return ad::add(rot, ad::scale(trans, static_cast<S>(lambda_t)));
}

inline double param_loss(const RigidTransform& pred, const RigidTransform& target, double lambda_t) {
  ad::Tape<double> tape;
  auto q = tape.constant(pred.rotation.coeffs().transpose());
  auto t = tape.constant(pred.translation.transpose());
  return param_loss<double>(q, t, target, lambda_t).scalar();
}

/// Rotation-only and translation-only copies of X' under `pred`.
struct PerturbedClouds {
  PointCloud rotated;
  PointCloud translated;
};

inline PerturbedClouds build_perturbed_clouds(const PointCloud& x_prime, const RigidTransform& pred) {
  return {apply(RigidTransform{pred.rotation, Vec3::Zero()}, x_prime),
          apply(RigidTransform{Quaternion::identity(), pred.translation}, x_prime)};
}

/// One branch of the sensitivity loss with explicit positive/negative pairs:
/// max(d_pos - d_neg + delta, d_pos), or the zero-hinged variant.
template <typename S>
ad::Var<S> tsl_branch(ad::Var<S> anchor, ad::Var<S> positive, ad::Var<S> negative, double delta, bool hinge_at_zero) {
  ad::Tape<S>& tape = *anchor.tape;
  ad::Var<S> d_pos = ad::l2_norm(ad::sub(anchor, positive));
  ad::Var<S> d_neg = ad::l2_norm(ad::sub(anchor, negative));
  ad::Var<S> first = ad::add(ad::sub(d_pos, d_neg), tape.scalar_constant(static_cast<S>(delta)));
  ad::Var<S> second = hinge_at_zero ? tape.scalar_constant(S(0)) : d_pos;
  return ad::maximum(first, second);
}

/// Sensitivity loss summed over both branches. The rotation branch treats
/// the translated cloud as positive and the rotated cloud as negative; the
/// translation branch swaps them.
template <typename S>
ad::Var<S> tsl(ad::Var<S> anchor_r, ad::Var<S> rotated_r, ad::Var<S> translated_r, ad::Var<S> anchor_t,
               ad::Var<S> rotated_t, ad::Var<S> translated_t, double delta, bool hinge_at_zero = false) {
  return ad::add(tsl_branch(anchor_r, translated_r, rotated_r, delta, hinge_at_zero),
                 tsl_branch(anchor_t, rotated_t, translated_t, delta, hinge_at_zero));
}

inline double tsl(const Eigen::RowVectorXd& anchor_r, const Eigen::RowVectorXd& rotated_r,
                  const Eigen::RowVectorXd& translated_r, const Eigen::RowVectorXd& anchor_t,
                  const Eigen::RowVectorXd& rotated_t, const Eigen::RowVectorXd& translated_t, double delta,
                  bool hinge_at_zero = false) {
  ad::Tape<double> tape;
  auto c = [&](const Eigen::RowVectorXd& v) { return tape.constant(v); };
  return tsl<double>(c(anchor_r), c(rotated_r), c(translated_r), c(anchor_t), c(rotated_t), c(translated_t), delta,
                     hinge_at_zero)
      .scalar();
}

/// ||F^r - F^r_d|| + ||F^t - F^t_d|| for one cloud.
template <typename S>
ad::Var<S> pfdl(ad::Var<S> f_r, ad::Var<S> f_r_dropped, ad::Var<S> f_t, ad::Var<S> f_t_dropped) {
  return ad::add(ad::l2_norm(ad::sub(f_r, f_r_dropped)), ad::l2_norm(ad::sub(f_t, f_t_dropped)));
}

inline double pfdl(const Eigen::RowVectorXd& f_r, const Eigen::RowVectorXd& f_r_dropped, const Eigen::RowVectorXd& f_t,
                   const Eigen::RowVectorXd& f_t_dropped) {
  ad::Tape<double> tape;
  auto c = [&](const Eigen::RowVectorXd& v) { return tape.constant(v); };
  return pfdl<double>(c(f_r), c(f_r_dropped), c(f_t), c(f_t_dropped)).scalar();
}

/// Keep-mask over point rows: each row is zeroed with probability `ratio`.
/// A mask that would drop every row is redrawn.
template <typename S = double>
Eigen::Matrix<S, Eigen::Dynamic, 1> dropout_mask(Eigen::Index rows, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw InvalidArgument("dropout ratio must lie in [0, 1)");
  std::bernoulli_distribution drop(ratio);
  Eigen::Matrix<S, Eigen::Dynamic, 1> mask(rows);
  do {
    for (Eigen::Index i = 0; i < rows; ++i) mask[i] = drop(rng) ? S(0) : S(1);
  } while (rows > 0 && mask.sum() == S(0));
  return mask;
}

/// Element-wise variant: one independent keep/drop draw per entry.
template <typename S = double>
ad::Matrix<S> dropout_element_mask(Eigen::Index rows, Eigen::Index cols, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw InvalidArgument("dropout ratio must lie in [0, 1)");
  std::bernoulli_distribution drop(ratio);
  ad::Matrix<S> mask(rows, cols);
  do {
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = drop(rng) ? S(0) : S(1);
  } while (mask.size() > 0 && mask.sum() == S(0));
  return mask;
}

struct IterationLoss {
  double param = 0.0;
  double sensitivity = 0.0;
  double dropout = 0.0;
};

/// (1/N) sum_i (L_p + beta L_s + gamma L_d).
inline double total_loss(const std::vector<IterationLoss>& per_iteration, double beta, double gamma) {
  if (per_iteration.empty()) throw InvalidArgument("total_loss: no iterations");
  double sum = 0.0;
  for (const auto& l : per_iteration) sum += l.param + beta * l.sensitivity + gamma * l.dropout;
  return sum / static_cast<double>(per_iteration.size());
}

}  // namespace pcreg
