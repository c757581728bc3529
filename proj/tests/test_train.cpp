#include <gtest/gtest.h>

#include <filesystem>

#include "pcreg/train.hpp"
#include "support.hpp"

using namespace pcreg;

namespace {

RunConfig small_run() {
  RunConfig c = profile_defaults("test");
  c.train.batch_size = 2;
  return c;
}

struct Fixture {
  RunConfig cfg = small_run();
  std::vector<Shape> shapes = load_shapes(cfg.shapes, Split::Train);
  std::vector<RegistrationPair> pairs = fixed_pairs(shapes, cfg.data, 3, 4);
};

std::vector<StepLog> run_steps(Trainer<float>& t, const Fixture& f, int from, int to) {
  std::vector<StepLog> out;
  for (int s = from; s < to; ++s) out.push_back(t.step(training_batch(f.shapes, f.cfg.data, f.cfg.train, s)));
  return out;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("pcreg_train_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

void expect_same_trace(const std::vector<StepLog>& a, const std::vector<StepLog>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].step, b[i].step);
    EXPECT_EQ(a[i].total, b[i].total);
    EXPECT_EQ(a[i].param, b[i].param);
    EXPECT_EQ(a[i].sensitivity, b[i].sensitivity);
    EXPECT_EQ(a[i].dropout, b[i].dropout);
  }
}

}  // namespace

TEST(Objective, ResidualTargetsComposeToGroundTruth) {
  const Fixture f;
  Model<double> model(f.cfg.model);
  for (const auto& pair : f.pairs) {
    ad::Tape<double> t;
    Rng rng(0);
    const auto obj = pair_objective(bind(model, t, false), pair, f.cfg.loss, ObjectiveOptions{}, rng);
    RigidTransform acc = RigidTransform::identity();
    for (const auto& s : obj.steps) {
      const RigidTransform target = residual_transform(pair.gt, acc);
      EXPECT_LE((compose(target, acc).homogeneous() - pair.gt.homogeneous()).cwiseAbs().maxCoeff(), 1e-6);
      acc = compose(s, acc);
    }
  }
}

TEST(Objective, ParamOnlyTotalIsMeanParamLoss) {
  const Fixture f;
  Model<double> model(f.cfg.model);
  LossConfig lc = f.cfg.loss;
  lc.beta = 0.0;
  lc.gamma = 0.0;
  for (const auto& pair : f.pairs) {
    ad::Tape<double> t;
    Rng rng(0);
    const auto obj = pair_objective(bind(model, t, false), pair, lc, ObjectiveOptions{}, rng);
    EXPECT_EQ(obj.total.scalar(), obj.param.scalar());
    double mean = 0.0;
    for (const auto& il : obj.per_iteration) mean += il.param;
    EXPECT_NEAR(obj.total.scalar(), mean / static_cast<double>(obj.per_iteration.size()), 1e-12);
  }
}

TEST(Objective, LossesOffGiveOnlyParamTerm) {
  const Fixture f;
  Model<double> model(f.cfg.model);
  ObjectiveOptions opt;
  opt.sensitivity = false;
  opt.dropout = false;
  ad::Tape<double> t;
  Rng rng(0);
  const auto obj = pair_objective(bind(model, t, false), f.pairs[0], f.cfg.loss, opt, rng);
  EXPECT_FALSE(obj.sensitivity.valid());
  EXPECT_FALSE(obj.dropout.valid());
  EXPECT_EQ(obj.total.scalar(), obj.param.scalar());
  EXPECT_TRUE(obj.distances.empty());
}

TEST(Objective, FrozenStepsMustCoverEveryIteration) {
  const Fixture f;
  Model<double> model(f.cfg.model);
  const std::vector<RigidTransform> one{RigidTransform::identity()};
  ObjectiveOptions opt;
  opt.frozen_steps = &one;
  ad::Tape<double> t;
  Rng rng(0);
  EXPECT_THROW(pair_objective(bind(model, t, false), f.pairs[0], f.cfg.loss, opt, rng), InvalidArgument);
}

TEST(Trainer, SameSeedGivesBitwiseEqualTraces) {
  const Fixture f;
  Trainer<float> a(f.cfg.model, f.cfg.loss, f.cfg.train), b(f.cfg.model, f.cfg.loss, f.cfg.train);
  expect_same_trace(run_steps(a, f, 0, 4), run_steps(b, f, 0, 4));
  for (std::size_t i = 0; i < a.model().params().tensor_count(); ++i) {
    EXPECT_EQ(a.model().params().values[i], b.model().params().values[i]);
  }
}

TEST(Trainer, StepChangesParametersAndCountsSteps) {
  const Fixture f;
  Trainer<float> t(f.cfg.model, f.cfg.loss, f.cfg.train);
  const auto before = t.model().params().values;
  const auto logs = run_steps(t, f, 0, 2);
  EXPECT_EQ(t.steps_done(), 2);
  EXPECT_EQ(logs[0].step, 1);
  EXPECT_EQ(logs[1].step, 2);
  bool changed = false;
  for (std::size_t i = 0; i < before.size(); ++i) changed |= before[i] != t.model().params().values[i];
  EXPECT_TRUE(changed);
  EXPECT_GT(logs[0].sensitivity, 0.0);
  EXPECT_GT(logs[0].dropout, 0.0);
}

TEST(Trainer, PerturbationCadenceSkipsAuxiliaryLosses) {
  Fixture f;
  f.cfg.train.perturbation_every = 2;
  Trainer<float> t(f.cfg.model, f.cfg.loss, f.cfg.train);
  const auto logs = run_steps(t, f, 0, 2);
  EXPECT_GT(logs[0].sensitivity, 0.0);
  EXPECT_EQ(logs[1].sensitivity, 0.0);
  EXPECT_EQ(logs[1].dropout, 0.0);
  EXPECT_EQ(logs[1].total, logs[1].param);
}

TEST(Trainer, EmptyBatchIsRejected) {
  const Fixture f;
  Trainer<float> t(f.cfg.model, f.cfg.loss, f.cfg.train);
  EXPECT_THROW(t.step({}), InvalidArgument);
}

TEST(Trainer, NonFiniteLossReportsStep) {
  const Fixture f;
  Trainer<float> u(f.cfg.model, f.cfg.loss, f.cfg.train);
  run_steps(u, f, 0, 1);
  RegistrationPair far = f.pairs[0];
  far.gt.translation = Vec3(std::numeric_limits<double>::infinity(), 0, 0);
  try {
    u.step({far});
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos) << e.what();
  }
}

TEST(Trainer, LogLineIsKeyValue) {
  StepLog l{7, 1.5, 1.25, 0.5, 0.25, 0.125};
  EXPECT_EQ(l.format(), "step=7 total=1.5 param=1.25 sensitivity=0.5 dropout=0.25 wall=0.1250");
}

TEST(Checkpoint, RoundTripRestoresParameters) {
  const Fixture f;
  const auto dir = temp_dir("roundtrip");
  Trainer<float> t(f.cfg.model, f.cfg.loss, f.cfg.train);
  run_steps(t, f, 0, 2);
  t.save_checkpoint(dir / "ck.bin");
  EXPECT_TRUE(std::filesystem::exists(dir / "ck.bin.json"));
  Trainer<float> u(f.cfg.model, f.cfg.loss, f.cfg.train);
  u.load_checkpoint(dir / "ck.bin");
  EXPECT_EQ(u.steps_done(), 2);
  for (std::size_t i = 0; i < t.model().params().tensor_count(); ++i) {
    EXPECT_EQ(t.model().params().values[i], u.model().params().values[i]);
  }
  const Model<float> m = Trainer<float>::load_model(dir / "ck.bin");
  EXPECT_EQ(m.params().values.back(), t.model().params().values.back());
  EXPECT_EQ(Trainer<float>::read_sidecar(dir / "ck.bin").at("step").get<int>(), 2);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  const Fixture f;
  const auto dir = temp_dir("resume");
  Trainer<float> full(f.cfg.model, f.cfg.loss, f.cfg.train);
  const auto trace = run_steps(full, f, 0, 4);
  Trainer<float> first(f.cfg.model, f.cfg.loss, f.cfg.train);
  run_steps(first, f, 0, 2);
  first.save_checkpoint(dir / "ck.bin");
  Trainer<float> resumed(f.cfg.model, f.cfg.loss, f.cfg.train);
  resumed.load_checkpoint(dir / "ck.bin");
  const auto rest = run_steps(resumed, f, 2, 4);
  expect_same_trace({trace[2], trace[3]}, rest);
}

TEST(Checkpoint, ConfigHashMismatchIsRefused) {
  const Fixture f;
  const auto dir = temp_dir("hash");
  Trainer<float> t(f.cfg.model, f.cfg.loss, f.cfg.train);
  t.save_checkpoint(dir / "ck.bin");
  TrainConfig other = f.cfg.train;
  other.learning_rate *= 2;
  Trainer<float> u(f.cfg.model, f.cfg.loss, other);
  try {
    u.load_checkpoint(dir / "ck.bin");
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("config hash mismatch"), std::string::npos);
  }
  TrainConfig longer = f.cfg.train;
  longer.steps += 100;
  Trainer<float> w(f.cfg.model, f.cfg.loss, longer);
  EXPECT_NO_THROW(w.load_checkpoint(dir / "ck.bin"));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const Fixture f;
  const auto dir = temp_dir("corrupt");
  Trainer<float> t(f.cfg.model, f.cfg.loss, f.cfg.train);
  t.save_checkpoint(dir / "ck.bin");
  std::filesystem::resize_file(dir / "ck.bin", 100);
  EXPECT_THROW(t.load_checkpoint(dir / "ck.bin"), CheckpointError);
  EXPECT_THROW(t.load_checkpoint(dir / "missing.bin"), CheckpointError);
}

TEST(Batches, FixedAndFreshSelection) {
  const Fixture f;
  const auto a = training_batch(f.shapes, f.cfg.data, f.cfg.train, 5);
  const auto b = training_batch(f.shapes, f.cfg.data, f.cfg.train, 5);
  const auto c = training_batch(f.shapes, f.cfg.data, f.cfg.train, 6);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].source.points(), b[0].source.points());
  EXPECT_NE(a[0].source.points(), c[0].source.points());
  const auto fx = training_batch(f.shapes, f.cfg.data, f.cfg.train, 1, f.pairs);
  EXPECT_EQ(fx[0].source.points(), f.pairs[2].source.points());
  EXPECT_EQ(fx[1].source.points(), f.pairs[3].source.points());
}

TEST(Evaluation, MedianAndIcpReport) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median({}), InvalidArgument);
  const Fixture f;
  std::vector<IcpResult> per;
  const MetricsReport r = evaluate_icp(f.pairs, IcpConfig{}, &per);
  EXPECT_EQ(per.size(), f.pairs.size());
  EXPECT_EQ(r.count, f.pairs.size());
}

TEST(Overfit, LossFallsOnOnePair) {
  RunConfig c = small_run();
  c.train.steps = 150;
  c.train.batch_size = 1;
  OverfitOptions o;
  o.pairs = 1;
  const OverfitResult r = overfit_harness(c, o);
  ASSERT_EQ(r.trace.size(), 150u);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += r.trace[static_cast<std::size_t>(i)].param;
    tail += r.trace[r.trace.size() - 1 - static_cast<std::size_t>(i)].param;
  }
  EXPECT_LT(tail, head);
  EXPECT_EQ(r.pairs.size(), 1u);
}
