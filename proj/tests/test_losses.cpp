#include <gtest/gtest.h>

#include "pcreg/losses.hpp"
#include "pcreg/train.hpp"
#include "support.hpp"

using namespace pcreg;
using Row = Eigen::RowVectorXd;

TEST(ParamLoss, HandCases) {
  const RigidTransform id = RigidTransform::identity();
  EXPECT_EQ(param_loss(id, id, 4.0), 0.0);
  const RigidTransform shifted{Quaternion::identity(), Vec3(1.0, 0.0, 0.0)};
  EXPECT_EQ(param_loss(shifted, id, 4.0), 4.0);
  const RigidTransform shifted2{Quaternion::identity(), Vec3(0.0, 3.0, 4.0)};
  EXPECT_EQ(param_loss(shifted2, id, 0.5), 2.5);
  const RigidTransform half_turn{Quaternion{0.0, 1.0, 0.0, 0.0}, Vec3::Zero()};
  EXPECT_EQ(param_loss(half_turn, id, 4.0), 2.0);
  const RigidTransform q{Quaternion{0.6, 0.8, 0.0, 0.0}, Vec3::Zero()};
  const RigidTransform q_neg{Quaternion{-0.6, -0.8, 0.0, 0.0}, Vec3::Zero()};
  EXPECT_EQ(param_loss(q, q_neg, 4.0), 0.0);
  const RigidTransform a{Quaternion{0.6, 0.8, 0.0, 0.0}, Vec3(0.0, 0.0, 1.0)};
  const RigidTransform b{Quaternion{0.8, 0.6, 0.0, 0.0}, Vec3(0.0, 0.0, 0.0)};
  EXPECT_NEAR(param_loss(a, b, 4.0), 0.4 + 4.0, 1e-15);
}

TEST(ParamLoss, TargetHemisphereMinimizesL1) {
  const Quaternion target{0.5, 0.5, 0.5, 0.5};
  EXPECT_EQ(align_hemisphere(target, Eigen::Vector4d(-0.5, -0.5, -0.5, -0.5)), -target);
  EXPECT_EQ(align_hemisphere(target, Eigen::Vector4d(0.5, 0.5, 0.5, 0.4)), target);
}

TEST(Sensitivity, EqualFeaturesGiveTwiceTheMargin) {
  const Row f = Row::Constant(12, 0.3);
  EXPECT_EQ(tsl(f, f, f, f, f, f, 0.01), 2 * 0.01);
  EXPECT_EQ(tsl(f, f, f, f, f, f, 0.01), 0.02);
  EXPECT_EQ(tsl(f, f, f, f, f, f, 0.01, true), 0.02);
}

TEST(Sensitivity, HandComputedBranches) {
  Row anchor(2), rotated(2), translated(2);
  anchor << 0, 0;
  rotated << 3, 4;     // distance 5
  translated << 1, 0;  // distance 1
  // rotation branch: positive = translated, negative = rotated -> max(1 - 5 + d, 1) = 1
  // translation branch: positive = rotated, negative = translated -> max(5 - 1 + d, 5) = 5
  const double d = 0.5;
  EXPECT_DOUBLE_EQ(tsl(anchor, rotated, translated, anchor, rotated, translated, d), 1.0 + 5.0);
  EXPECT_DOUBLE_EQ(tsl(anchor, rotated, translated, anchor, rotated, translated, d, true), 0.0 + 4.5);
}

TEST(Dropout, RatioZeroKeepsEverything) {
  Rng rng(1);
  EXPECT_EQ(dropout_mask(100, 0.0, rng).sum(), 100.0);
  const Row f = Row::LinSpaced(5, 0, 1);
  EXPECT_EQ(pfdl(f, f, f, f), 0.0);
}

TEST(Dropout, MaskStatisticsAndRedraw) {
  Rng rng(2);
  const Eigen::VectorXd m = dropout_mask(100000, 0.3, rng);
  EXPECT_NEAR(1.0 - m.mean(), 0.3, 0.01);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(dropout_mask(1, 0.95, rng)[0], 1.0);
  EXPECT_THROW(dropout_mask(5, 1.0, rng), InvalidArgument);
  const auto em = dropout_element_mask<double>(300, 40, 0.3, rng);
  EXPECT_NEAR(1.0 - em.mean(), 0.3, 0.01);
}

TEST(Dropout, HandComputedDistance) {
  Row a(2), b(2);
  a << 3, 4;
  b << 0, 0;
  EXPECT_EQ(pfdl(a, b, a, a), 5.0);
}

TEST(TotalLoss, ArithmeticCase) {
  const std::vector<IterationLoss> one{{1.0, 2.0, 3.0}};
  EXPECT_NEAR(total_loss(one, 1e-3, 1e-3), 1.005, 1e-15);
  const std::vector<IterationLoss> two{{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}};
  EXPECT_NEAR(total_loss(two, 1e-3, 1e-3), 1.005, 1e-15);
  EXPECT_THROW(total_loss({}, 1e-3, 1e-3), InvalidArgument);
  EXPECT_EQ(total_loss(two, 0.0, 0.0), 1.0);
}

TEST(PerturbedClouds, SplitRotationAndTranslation) {
  Rng rng(3);
  const PointCloud x(support::random_points(rng, 10));
  const RigidTransform t = support::random_rigid(rng);
  const auto p = build_perturbed_clouds(x, t);
  const Mat3 r = t.rotation_matrix();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    EXPECT_LT((p.rotated.point(i) - r * x.point(i)).norm(), 1e-14);
    EXPECT_LT((p.translated.point(i) - (x.point(i) + t.translation)).norm(), 1e-14);
  }
}

namespace {

RegistrationPair small_pair(std::uint64_t seed, int n = 24) {
  ShapeSourceConfig sc;
  sc.samples_per_shape = 256;
  const auto shapes = load_shapes(sc, Split::Train);
  DataConfig dc;
  dc.num_points = n;
  return make_pair(shapes[seed % shapes.size()], dc, seed);
}

}  // namespace

TEST(Objective, WithoutAuxiliaryWeightsTotalEqualsMeanParamLoss) {
  ModelConfig mc = ModelConfig::test_profile();
  const Model<double> model(mc);
  LossConfig lc;
  lc.beta = 0.0;
  lc.gamma = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    ad::Tape<double> tape;
    Rng rng(s);
    const auto obj = pair_objective(bind(model, tape, false), small_pair(s), lc, ObjectiveOptions{}, rng);
    EXPECT_EQ(obj.total.scalar(), obj.param.scalar());
    double mean = 0.0;
    for (const auto& it : obj.per_iteration) mean += it.param;
    EXPECT_NEAR(obj.param.scalar(), mean / static_cast<double>(obj.per_iteration.size()), 1e-14);
  }
}

TEST(Objective, DropoutTermVanishesAtRatioZero) {
  const Model<double> model(ModelConfig::test_profile());
  LossConfig lc;
  lc.dropout_ratio = 0.0;
  ad::Tape<double> tape;
  Rng rng(1);
  const auto obj = pair_objective(bind(model, tape, false), small_pair(1), lc, ObjectiveOptions{}, rng);
  EXPECT_EQ(obj.dropout.scalar(), 0.0);
  lc.dropout_per_element = true;
  ad::Tape<double> tape2;
  const auto obj2 = pair_objective(bind(model, tape2, false), small_pair(1), lc, ObjectiveOptions{}, rng);
  EXPECT_EQ(obj2.dropout.scalar(), 0.0);
}

TEST(Objective, AssemblesWeightedTerms) {
  const Model<double> model(ModelConfig::test_profile());
  LossConfig lc;
  lc.beta = 0.25;
  lc.gamma = 0.5;
  ad::Tape<double> tape;
  Rng rng(4);
  const auto obj = pair_objective(bind(model, tape, false), small_pair(2), lc, ObjectiveOptions{}, rng);
  EXPECT_NEAR(obj.total.scalar(), total_loss(obj.per_iteration, lc.beta, lc.gamma), 1e-12);
  EXPECT_EQ(obj.per_iteration.size(), 4u);
  EXPECT_EQ(obj.distances.size(), 4u);
}

TEST(Objective, ResidualTargetsComposeToGroundTruth) {
  const Model<double> model(ModelConfig::test_profile());
  const RegistrationPair pair = small_pair(3);
  ad::Tape<double> tape;
  Rng rng(0);
  const auto obj = pair_objective(bind(model, tape, false), pair, LossConfig{}, ObjectiveOptions{}, rng);
  RigidTransform acc = RigidTransform::identity();
  for (const auto& step : obj.steps) {
    const RigidTransform target = residual_transform(pair.gt, acc);
    EXPECT_LT((compose(target, acc).homogeneous() - pair.gt.homogeneous()).cwiseAbs().maxCoeff(), 1e-6);
    acc = compose(step, acc);
  }
}
