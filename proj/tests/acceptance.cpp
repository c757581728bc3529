// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance [--steps N] [--only 1,2,...]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <regex>
#include <set>
#include <sstream>
#include <string>

#include "network_check.hpp"
#include "pcreg/manifest.hpp"
#include "pcreg/train.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace pcreg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// ---- 1 ----
void geometry_oracle(Outcome& o) {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const RigidTransform a = support::random_rigid(rng), b = support::random_rigid(rng);
    const Vec3 p = support::random_points(rng, 1).row(0).transpose();
    const Mat4 ha = support::homogeneous(a), hb = support::homogeneous(b);
    worst = std::max(worst, support::max_abs_diff(compose(a, b).homogeneous(), ha * hb));
    worst = std::max(worst, support::max_abs_diff(inverse(a).homogeneous(), ha.inverse()));
    worst = std::max(worst, (support::lift(apply(a, p)) - ha * support::lift(p)).norm());
    worst = std::max(worst, support::max_abs_diff(residual_transform(a, b).homogeneous(), ha * hb.inverse()));
  }
  const double secs = seconds_since(t0);
  o.detail << "1000 cases, max deviation " << fmt(worst) << ", " << fmt(secs, 3) << " s";
  o.require(worst < 1e-6, "deviation < 1e-6");
  o.require(secs < 5.0, "runtime < 5 s");
}

// ---- 2 ----
void invariance(Outcome& o) {
  const Model<double> model(ModelConfig::test_profile());
  const DenseLayer& block = model.branch(Branch::Rotation).blocks[2];
  Rng rng(202);
  double perm = 0.0, dup = 0.0, pfi_other = 0.0, pfi_self = 0.0, reg = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 20 + trial % 17, m = 18 + trial % 13;
    const PointMatrix x = support::random_points(rng, n), y = support::random_points(rng, m);
    const auto px = support::random_permutation(rng, n), py = support::random_permutation(rng, m);
    PointMatrix xd(n + 5, 3);
    xd << x, x.topRows(5);
    {
      ad::Tape<double> t;
      const Bound<double> p = bind(model, t, false);
      auto c = [&](const PointMatrix& v) { return t.constant(ad::Matrix<double>(v)); };
      for (Branch br : {Branch::Rotation, Branch::Translation}) {
        const auto base = encode_pair(p, c(x), c(y), br);
        const auto moved = encode_pair(p, c(support::permute_rows(x, px)), c(support::permute_rows(y, py)), br);
        const auto doubled = encode_pair(p, c(xd), c(y), br);
        perm = std::max(perm, (base.first.global.value() - moved.first.global.value()).cwiseAbs().maxCoeff());
        perm = std::max(perm, (base.second.global.value() - moved.second.global.value()).cwiseAbs().maxCoeff());
        dup = std::max(dup, (base.first.global.value() - doubled.first.global.value()).cwiseAbs().maxCoeff());
      }
      const auto self = support::random_matrix(rng, n, 8), other = support::random_matrix(rng, m, 8);
      ad::Matrix<double> other_p(m, 8), self_p(n, 8);
      for (int i = 0; i < m; ++i) other_p.row(i) = other.row(py[static_cast<std::size_t>(i)]);
      for (int i = 0; i < n; ++i) self_p.row(i) = self.row(px[static_cast<std::size_t>(i)]);
      const auto out = pfi(p, block, t.constant(self), t.constant(other)).value();
      const auto out_o = pfi(p, block, t.constant(self), t.constant(other_p)).value();
      const auto out_s = pfi(p, block, t.constant(self_p), t.constant(other)).value();
      pfi_other = std::max(pfi_other, (out - out_o).cwiseAbs().maxCoeff());
      for (int i = 0; i < n; ++i) {
        pfi_self = std::max(pfi_self, (out_s.row(i) - out.row(px[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff());
      }
    }
    const auto a = register_clouds(model, PointCloud(x), PointCloud(y));
    const auto b = register_clouds(model, PointCloud(support::permute_rows(x, px)), PointCloud(support::permute_rows(y, py)));
    reg = std::max(reg, (a.final_transform.homogeneous() - b.final_transform.homogeneous()).cwiseAbs().maxCoeff());
  }
  o.detail << "50 inputs: global perm " << fmt(perm) << ", duplication " << fmt(dup) << ", PFI other " << fmt(pfi_other)
           << ", PFI self-equivariance " << fmt(pfi_self) << ", register " << fmt(reg);
  o.require(perm <= 1e-5, "global permutation");
  o.require(dup <= 1e-5, "global duplication");
  o.require(pfi_other <= 1e-5, "PFI other-cloud permutation");
  o.require(pfi_self <= 1e-5, "PFI self equivariance");
  o.require(reg <= 1e-5, "register permutation");
}

// ---- 3 ----
void gradients(Outcome& o) {
  using support::LossTerm;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (LossTerm term : {LossTerm::Param, LossTerm::Sensitivity, LossTerm::Dropout, LossTerm::Total}) {
      const auto r = support::network_gradient_check(seed, term);
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        where = std::string(support::term_name(term)) + " seed " + std::to_string(seed);
      }
    }
  }
  const double secs = seconds_since(t0);
  o.detail << "10 seeds x {L_p, L_s, L_d, L_total}, max relative error " << fmt(worst) << " (" << where << "), "
           << fmt(secs, 3) << " s";
  o.require(worst < 1e-3, "relative error < 1e-3");
  o.require(secs < 120.0, "runtime < 2 min");
}

// ---- 4 ----
void loss_values(Outcome& o) {
  const Eigen::RowVectorXd f = Eigen::RowVectorXd::Constant(16, 0.25);
  const double ts = tsl(f, f, f, f, f, f, 0.01);
  const double total = total_loss({IterationLoss{1.0, 2.0, 3.0}}, 1e-3, 1e-3);
  Rng rng(404);
  const Eigen::VectorXd keep = dropout_mask(64, 0.0, rng);
  const Eigen::RowVectorXd g = Eigen::RowVectorXd::LinSpaced(16, -1, 1);
  const double pf = pfdl(g, g, g, g);
  const RigidTransform id = RigidTransform::identity();
  const double lp_q = param_loss(id, RigidTransform{Quaternion{0, 1, 0, 0}, Vec3::Zero()}, 4.0);
  const double lp_t = param_loss(id, RigidTransform{Quaternion::identity(), Vec3(0.3, 0, 0.4)}, 4.0);
  const double lp_0 = param_loss(id, id, 4.0);
  o.detail << "TSL " << fmt(ts, 17) << ", total " << fmt(total, 17) << ", PFDL(ratio 0) " << pf << ", L_p " << lp_q << " / "
           << fmt(lp_t, 17) << " / " << lp_0;
  o.require(ts == 0.02, "TSL all-equal = 0.02");
  o.require(total == 1.005, "total = 1.005");
  o.require(keep.sum() == 64.0 && pf == 0.0, "PFDL = 0 at ratio 0");
  o.require(lp_q == 2.0 && lp_t == 2.0 && lp_0 == 0.0, "param_loss hand cases");
}

// ---- 5, 6, 7 ----
RunConfig overfit_config(int steps) {
  RunConfig c = profile_defaults("desk");
  c.train.steps = steps;
  c.train.batch_size = 8;
  c.train.fixed_pairs = 8;
  c.train.enable_tsl = true;
  c.train.enable_pfdl = true;
  return c;
}

struct OverfitRuns {
  std::optional<OverfitResult> with_pfi;
  std::optional<OverfitResult> without_pfi;
};

void overfit(Outcome& o, OverfitRuns& runs, int steps) {
  const RunConfig cfg = overfit_config(steps);
  runs.with_pfi = overfit_harness(cfg, OverfitOptions{});
  const OverfitResult& r = *runs.with_pfi;
  auto smoothed = [&](std::size_t from) {
    double s = 0.0;
    const std::size_t to = std::min(r.trace.size(), from + 50);
    for (std::size_t i = from; i < to; ++i) s += r.trace[i].total;
    return s / static_cast<double>(to - from);
  };
  o.detail << "8 partial pairs (keep " << cfg.data.keep_fraction << ", " << cfg.data.num_points << " pts), batch 8, "
           << steps << " steps, all losses: Error(R) " << fmt(r.report.error_r) << " deg, Error(t) "
           << fmt(r.report.error_t) << ", loss " << fmt(smoothed(0)) << " -> " << fmt(smoothed(r.trace.size() - 50))
           << ", " << fmt(r.seconds / 60.0, 3) << " min on 1 thread";
  o.require(steps <= 5000, "steps <= 5k");
  o.require(r.report.error_r < 5.0, "Error(R) < 5 deg");
  o.require(r.report.error_t < 0.05, "Error(t) < 0.05");
  o.require(r.seconds < 30 * 60, "wall time < 30 min");
}

void tsl_direction(Outcome& o, const OverfitRuns& runs) {
  if (!runs.with_pfi) {
    o.require(false, "needs the overfit run");
    return;
  }
  const ObjectiveSummary& s = runs.with_pfi->objective;
  o.detail << "rotation branch: median |F - F(X'_t)| " << fmt(s.median_r_translated) << " vs |F - F(X'_r)| "
           << fmt(s.median_r_rotated) << "; translation branch: median |F - F(X'_r)| " << fmt(s.median_t_rotated)
           << " vs |F - F(X'_t)| " << fmt(s.median_t_translated);
  o.require(s.median_r_translated < s.median_r_rotated, "rotation branch direction");
  o.require(s.median_t_rotated < s.median_t_translated, "translation branch direction");
}

void pfi_ablation(Outcome& o, OverfitRuns& runs, int steps) {
  if (!runs.with_pfi) {
    o.require(false, "needs the overfit run");
    return;
  }
  RunConfig cfg = overfit_config(steps);
  cfg.model.enable_pfi = false;
  runs.without_pfi = overfit_harness(cfg, OverfitOptions{});
  const double on = runs.with_pfi->objective.param, off = runs.without_pfi->objective.param;
  o.detail << "final L_p on the training pairs: PFI on " << fmt(on) << ", PFI off " << fmt(off) << " (Error(R) "
           << fmt(runs.with_pfi->report.error_r) << " vs " << fmt(runs.without_pfi->report.error_r) << " deg)";
  o.require(on <= off, "L_p(on) <= L_p(off)");
}

// ---- 8 ----
void icp_baseline(Outcome& o) {
  Rng rng(808);
  const auto shapes = load_shapes(ShapeSourceConfig{}, Split::Test);
  double worst_r = 0.0, worst_t = 0.0;
  int runs = 0, non_monotone = 0;
  for (int i = 0; i < 16; ++i) {
    const PointCloud cloud = sample_pair(shapes[static_cast<std::size_t>(i) % shapes.size()].cloud,
                                         SamplingMode::OnceSampled, 512, rng)
                                 .first;
    const RigidTransform gt{axis_angle(random_unit_vector(rng), 10.0 / kDegPerRad),
                            Vec3(std::uniform_real_distribution<double>(-0.05, 0.05)(rng), 0.02, -0.03)};
    const IcpResult r = icp(cloud, apply(gt, cloud), RigidTransform::identity());
    const auto [er, et] = isotropic_errors(r.transform, gt);
    worst_r = std::max(worst_r, er);
    worst_t = std::max(worst_t, et);
    ++runs;
    for (std::size_t k = 1; k < r.residual_history.size(); ++k) {
      if (r.residual_history[k] > r.residual_history[k - 1] + 1e-9) {
        ++non_monotone;
        break;
      }
    }
  }
  o.detail << runs << " full-overlap 10 deg pairs: worst " << fmt(worst_r) << " deg / " << fmt(worst_t)
           << ", non-monotone runs " << non_monotone;
  o.require(worst_r < 0.1 && worst_t < 1e-3, "closure within 0.1 deg / 1e-3");
  o.require(non_monotone == 0, "monotone residuals");
}

// ---- 9 ----
void metrics_suite(Outcome& o) {
  const RigidTransform thirty{axis_angle(Vec3(1, 2, 3).normalized(), 30.0 / kDegPerRad), Vec3::Zero()};
  const double e30 = isotropic_errors(thirty, RigidTransform::identity()).first;
  Rng rng(909);
  int rmse_violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + trial % 20);
    std::normal_distribution<double> nd(0.0, 1.0 + trial);
    for (double& x : v) x = nd(rng);
    if (rmse(v) < mae(v)) ++rmse_violations;
  }
  double sign_gap = 0.0;
  for (int i = 0; i < 100; ++i) {
    const RigidTransform pred = support::random_rigid(rng), gt = support::random_rigid(rng);
    const RigidTransform flipped{-pred.rotation, pred.translation};
    sign_gap = std::max(sign_gap, std::abs(isotropic_errors(pred, gt).first - isotropic_errors(flipped, gt).first));
  }
  o.detail << "30 deg rotation -> " << fmt(e30, 10) << " deg, RMSE < MAE in " << rmse_violations
           << "/100 sets, sign gap " << fmt(sign_gap);
  o.require(std::abs(e30 - 30.0) <= 1e-4, "30 deg within 1e-4");
  o.require(rmse_violations == 0, "RMSE >= MAE");
  o.require(sign_gap <= 1e-9, "quaternion sign invariance");
}

// ---- 10 ----
int shell(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string strip_wall(const std::string& log) { return std::regex_replace(log, std::regex(" wall=[0-9.]+"), ""); }

void determinism(Outcome& o) {
  const fs::path root = fs::temp_directory_path() / "pcreg_acceptance_replay";
  fs::remove_all(root);
  const std::string cli = PCREG_CLI_PATH;
  const std::string common = " --profile test --seed 31 --set train.steps=25 train.log_every=1 ";
  bool ran = true;
  for (const char* run : {"a", "b"}) {
    const fs::path d = root / run;
    ran &= shell(cli + " generate" + common + "--out " + (d / "gen").string()) == 0;
    ran &= shell(cli + " train" + common + "--out " + (d / "train").string()) == 0;
    ran &= shell(cli + " eval" + common + "--checkpoint " + (d / "train/checkpoint.bin").string() + " --dataset " +
                 (d / "gen/manifest.json").string() + " --out " + (d / "eval").string()) == 0;
  }
  o.require(ran, "all commands exit 0");
  if (!ran) return;
  const fs::path a = root / "a", b = root / "b";
  const bool manifests = slurp(a / "gen/manifest.json") == slurp(b / "gen/manifest.json");
  const std::string la = strip_wall(slurp(a / "train/train.log")), lb = strip_wall(slurp(b / "train/train.log"));
  const bool traces = !la.empty() && la == lb;
  const bool checkpoints = slurp(a / "train/checkpoint.bin") == slurp(b / "train/checkpoint.bin");
  const bool reports = slurp(a / "eval/report.json") == slurp(b / "eval/report.json");
  const auto lines = std::count(la.begin(), la.end(), '\n');
  o.detail << "generate/train/eval replayed twice: manifests " << (manifests ? "equal" : "differ") << ", " << lines
           << "-line loss traces " << (traces ? "equal" : "differ") << ", checkpoints "
           << (checkpoints ? "equal" : "differ") << ", reports " << (reports ? "equal" : "differ");
  o.require(manifests, "manifests");
  o.require(traces, "loss traces");
  o.require(checkpoints, "checkpoints");
  o.require(reports, "reports");
}

}  // namespace

int main(int argc, char** argv) {
  int steps = 2000;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--steps" && i + 1 < argc) {
      steps = std::stoi(argv[++i]);
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: acceptance [--steps N] [--only 1,2,...]\n";
      return 2;
    }
  }
  if (only.count(6) || only.count(7)) only.insert(5);

  OverfitRuns runs;
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"geometry oracle", geometry_oracle},
      {"invariance suite", invariance},
      {"gradient suite", gradients},
      {"loss point-values", loss_values},
      {"overfit run", [&](Outcome& o) { overfit(o, runs, steps); }},
      {"TSL direction", [&](Outcome& o) { tsl_direction(o, runs); }},
      {"PFI ablation direction", [&](Outcome& o) { pfi_ablation(o, runs, steps); }},
      {"ICP baseline", icp_baseline},
      {"metrics suite", metrics_suite},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail.str()
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
