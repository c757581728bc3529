// Command-line front end: generate, train, eval, register, inspect, plot.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pcreg/manifest.hpp"
#include "pcreg/ply.hpp"
#include "pcreg/train.hpp"

namespace fs = std::filesystem;
using namespace pcreg;

namespace {

struct Common {
  std::string config;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--profile", c.profile, "paper, desk or test")->check(CLI::IsMember({"paper", "desk", "test"}));
  cmd->add_option("--seed", c.seed, "run seed (data, training and initialization)");
  cmd->add_option("--set", c.sets, "dotted override, e.g. train.steps=100")->take_all();
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = load_run_config(c.config.empty() ? std::nullopt : std::optional<fs::path>(c.config),
                                  c.profile.empty() ? std::nullopt : std::optional<std::string>(c.profile));
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = *c.seed;
    cfg.model.init_seed = *c.seed;
  }
  for (const auto& s : c.sets) apply_override(cfg, s);
  cfg.validate();
  return cfg;
}

/// Replaces the network-related sections with those stored beside a checkpoint.
void adopt_checkpoint(RunConfig& cfg, const fs::path& checkpoint) {
  const Json side = Trainer<float>::read_sidecar(checkpoint);
  from_json(side.at("model"), cfg.model);
  from_json(side.at("loss"), cfg.loss);
  from_json(side.at("train"), cfg.train);
}

fs::path prepare_out(const std::string& out, const RunConfig& cfg) {
  const fs::path dir(out);
  fs::create_directories(dir);
  write_json_file(dir / "config.json", to_json(cfg));
  return dir;
}

std::string pair_stem(int index) {
  std::ostringstream os;
  os << "pair_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

double rotation_angle_deg(const RigidTransform& t) { return isotropic_errors(t, RigidTransform::identity()).first; }

std::string table_text(const MetricsReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "RMSE(R)" << std::setw(12) << "MAE(R)" << std::setw(12) << "RMSE(t)"
     << std::setw(12) << "MAE(t)" << std::setw(12) << "Error(R)" << "Error(t)\n";
  os << std::fixed << std::setprecision(6);
  for (double v : {r.rmse_r, r.mae_r, r.rmse_t, r.mae_t, r.error_r}) os << std::setw(12) << v;
  os << r.error_t << "\n";
  return os.str();
}

Json report_json(const MetricsReport& r, const std::string& method, const DatasetManifest& m) {
  Json samples = Json::array();
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const auto& s = r.samples[i];
    const auto& p = m.pairs[i];
    samples.push_back(Json{{"index", p.index},
                           {"shape_id", p.shape_id},
                           {"gt_angle_deg", rotation_angle_deg(p.gt)},
                           {"gt_translation", p.gt.translation.norm()},
                           {"error_r_deg", s.error_r_deg},
                           {"error_t", s.error_t},
                           {"euler_error_deg", s.rotation_deg},
                           {"translation_error", s.translation},
                           {"gimbal_degenerate", s.gimbal_degenerate}});
  }
  return Json{{"method", method},
              {"count", r.count},
              {"metrics",
               {{"rmse_r", r.rmse_r},
                {"mae_r", r.mae_r},
                {"rmse_t", r.rmse_t},
                {"mae_t", r.mae_t},
                {"error_r", r.error_r},
                {"error_t", r.error_t}}},
              {"gimbal_degenerate", r.gimbal_degenerate},
              {"samples", samples}};
}

// ---- minimal SVG output ----

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}
  void line(double x1, double y1, double x2, double y2, const std::string& color, double width = 1.0) {
    os_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2 << "\" stroke=\"" << color
        << "\" stroke-width=\"" << width << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& color, double opacity = 1.0) {
    os_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << color << "\" fill-opacity=\""
        << opacity << "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
    os_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) os_ << x << "," << y << " ";
    os_ << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 12, const std::string& anchor = "start") {
    os_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size << "\" font-family=\"sans-serif\" text-anchor=\""
        << anchor << "\">" << s << "</text>\n";
  }
  void save(const fs::path& path) const {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << os_.str() << "</svg>\n";
  }

 private:
  double w_, h_;
  std::ostringstream os_;
};

const std::vector<std::string> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

void line_chart(const fs::path& path, const std::string& title, const std::string& xlabel, const std::string& ylabel,
                const std::vector<Series>& series) {
  const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
  double xmax = 1e-12, ymax = 1e-12;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      xmax = std::max(xmax, x);
      ymax = std::max(ymax, y);
    }
  }
  ymax *= 1.1;
  auto px = [&](double x) { return L + x / xmax * (W - L - R); };
  auto py = [&](double y) { return H - B - y / ymax * (H - T - B); };
  Svg svg(W, H);
  svg.text(W / 2, 24, title, 14, "middle");
  svg.line(L, H - B, W - R, H - B, "black");
  svg.line(L, T, L, H - B, "black");
  for (int k = 0; k <= 4; ++k) {
    std::ostringstream xs, ys;
    xs << std::setprecision(3) << xmax * k / 4;
    ys << std::setprecision(3) << ymax * k / 4;
    svg.text(px(xmax * k / 4), H - B + 16, xs.str(), 10, "middle");
    svg.text(L - 6, py(ymax * k / 4) + 4, ys.str(), 10, "end");
  }
  svg.text(W / 2, H - 12, xlabel, 12, "middle");
  svg.text(14, T - 10, ylabel, 12);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::string& color = kPalette[i % kPalette.size()];
    std::vector<std::pair<double, double>> pts;
    for (const auto& [x, y] : series[i].points) pts.push_back({px(x), py(y)});
    svg.polyline(pts, color);
    for (const auto& [x, y] : pts) svg.circle(x, y, 3, color);
    svg.text(W - R - 150, T + 16.0 * static_cast<double>(i + 1), series[i].label, 11);
    svg.line(W - R - 170, T + 16.0 * static_cast<double>(i + 1) - 4, W - R - 155, T + 16.0 * static_cast<double>(i + 1) - 4,
             color, 3);
  }
  svg.save(path);
}

/// Orthographic x-y view of several clouds plus highlighted markers.
void cloud_view(const fs::path& path, const std::string& title,
                const std::vector<std::pair<const PointMatrix*, std::string>>& clouds,
                const std::vector<std::pair<Vec3, std::string>>& markers,
                const std::vector<double>* point_weight = nullptr) {
  const double W = 520, H = 540, M = 30;
  double extent = 1e-9;
  for (const auto& [pts, color] : clouds) extent = std::max(extent, pts->leftCols(2).cwiseAbs().maxCoeff());
  for (const auto& [p, color] : markers) extent = std::max(extent, std::max(std::abs(p.x()), std::abs(p.y())));
  auto px = [&](double x) { return W / 2 + x / extent * (W / 2 - M); };
  auto py = [&](double y) { return 20 + H / 2 - y / extent * (W / 2 - M); };
  Svg svg(W, H);
  svg.text(W / 2, 18, title, 14, "middle");
  for (const auto& [pts, color] : clouds) {
    for (Eigen::Index i = 0; i < pts->rows(); ++i) {
      double r = 2.0;
      if (point_weight) r = 1.5 + 2.0 * std::sqrt((*point_weight)[static_cast<std::size_t>(i)]);
      svg.circle(px((*pts)(i, 0)), py((*pts)(i, 1)), r, color, 0.6);
    }
  }
  for (const auto& [p, color] : markers) {
    svg.circle(px(p.x()), py(p.y()), 7, color);
    svg.circle(px(p.x()), py(p.y()), 3, "white");
  }
  svg.save(path);
}

// ---- commands ----

int cmd_generate(const Common& c) {
  const RunConfig cfg = resolve(c);
  const fs::path dir = prepare_out(c.out, cfg);
  const auto shapes = load_shapes(cfg.shapes, cfg.generate_split);
  const DatasetManifest m = build_manifest(shapes, cfg.shapes, cfg.data, cfg.generate_split, cfg.seed, cfg.generate_pairs);
  write_manifest(dir / "manifest.json", m);
  fs::create_directories(dir / "pairs");
  for (const auto& r : m.pairs) {
    const RegistrationPair p = regenerate_pair(m, shapes, r);
    ply::write(dir / "pairs" / (pair_stem(r.index) + "_source.ply"), p.source);
    ply::write(dir / "pairs" / (pair_stem(r.index) + "_reference.ply"), p.reference);
  }
  std::cout << "wrote " << m.pairs.size() << " pairs to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& resume) {
  const RunConfig cfg = resolve(c);
  const fs::path dir = prepare_out(c.out, cfg);
  const auto shapes = load_shapes(cfg.shapes, Split::Train);
  std::vector<RegistrationPair> fixed;
  if (cfg.train.fixed_pairs > 0) fixed = fixed_pairs(shapes, cfg.data, cfg.seed, cfg.train.fixed_pairs);
  Trainer<float> trainer(cfg.model, cfg.loss, cfg.train);
  if (!resume.empty()) trainer.load_checkpoint(resume);
  std::ofstream log(dir / "train.log", resume.empty() ? std::ios::trunc : std::ios::app);
  for (int s = trainer.steps_done(); s < cfg.train.steps; ++s) {
    const StepLog l = trainer.step(training_batch(shapes, cfg.data, cfg.train, s, fixed));
    if (l.step % cfg.train.log_every == 0 || l.step == 1 || l.step == cfg.train.steps) {
      log << l.format() << "\n";
      std::cout << l.format() << "\n";
    }
    if (cfg.train.checkpoint_every > 0 && l.step % cfg.train.checkpoint_every == 0) {
      trainer.save_checkpoint(dir / ("checkpoint_" + std::to_string(l.step) + ".bin"));
    }
  }
  trainer.save_checkpoint(dir / "checkpoint.bin");
  std::cout << "checkpoint " << (dir / "checkpoint.bin").string() << "\n";
  return 0;
}

DatasetManifest eval_dataset(const RunConfig& cfg, const std::string& dataset) {
  if (!dataset.empty()) return read_manifest(dataset);
  const auto shapes = load_shapes(cfg.shapes, cfg.eval.split);
  return build_manifest(shapes, cfg.shapes, cfg.data, cfg.eval.split, cfg.seed, cfg.eval.pairs);
}

int cmd_eval(const Common& c, const std::string& method_flag, const std::string& checkpoint, const std::string& dataset) {
  RunConfig cfg = resolve(c);
  if (!method_flag.empty()) cfg.eval.method = method_flag;
  if (cfg.eval.method == "learned") {
    if (checkpoint.empty()) throw InvalidArgument("eval: --checkpoint is required for the learned method");
    adopt_checkpoint(cfg, checkpoint);
  }
  const fs::path dir = prepare_out(c.out, cfg);
  const DatasetManifest m = eval_dataset(cfg, dataset);
  write_manifest(dir / "manifest.json", m);
  const auto pairs = regenerate_pairs(m);
  MetricsReport report;
  if (cfg.eval.method == "learned") {
    report = evaluate_learned(Trainer<float>::load_model(checkpoint), pairs);
  } else {
    std::vector<IcpResult> runs;
    report = evaluate_icp(pairs, cfg.eval.icp, &runs);
  }
  write_json_file(dir / "report.json", report_json(report, cfg.eval.method, m));
  const std::string table = table_text(report);
  std::ofstream(dir / "report.txt") << table;
  std::cout << table;
  return 0;
}

int cmd_register(const std::string& checkpoint, const std::string& src, const std::string& ref, const Common& c) {
  RunConfig cfg = resolve(c);
  adopt_checkpoint(cfg, checkpoint);
  const Model<float> model = Trainer<float>::load_model(checkpoint);
  const PointCloud source = ply::read(src), reference = ply::read(ref);
  const RegistrationResult r = register_clouds(model, source, reference);
  const RigidTransform& t = r.final_transform;
  std::cout << std::setprecision(9) << "quaternion " << t.rotation.w << " " << t.rotation.x << " " << t.rotation.y << " "
            << t.rotation.z << "\n"
            << "translation " << t.translation.x() << " " << t.translation.y() << " " << t.translation.z() << "\n";
  Json iters = Json::array();
  for (std::size_t i = 0; i < r.per_iteration.size(); ++i) {
    const RigidTransform& s = r.per_iteration[i];
    std::cout << "iteration " << i + 1 << " residual_angle_deg=" << rotation_angle_deg(s)
              << " residual_translation=" << s.translation.norm() << "\n";
    iters.push_back(Json{{"transform", transform_json(s)},
                         {"angle_deg", rotation_angle_deg(s)},
                         {"translation_norm", s.translation.norm()},
                         {"saliency_source", vec_json(r.saliency_source[i])},
                         {"saliency_reference", vec_json(r.saliency_reference[i])}});
  }
  if (!c.out.empty()) {
    const fs::path dir = prepare_out(c.out, cfg);
    ply::write(dir / "aligned.ply", apply(t, source));
    write_json_file(dir / "registration.json", Json{{"checkpoint", checkpoint},
                                                    {"source", fs::absolute(src).string()},
                                                    {"reference", fs::absolute(ref).string()},
                                                    {"aligned", fs::absolute(dir / "aligned.ply").string()},
                                                    {"final", transform_json(t)},
                                                    {"iterations", iters}});
  }
  return 0;
}

int cmd_inspect(const Common& c, const std::string& checkpoint, const std::string& dataset, int index) {
  RunConfig cfg = resolve(c);
  adopt_checkpoint(cfg, checkpoint);
  const fs::path dir = prepare_out(c.out, cfg);
  const DatasetManifest m = eval_dataset(cfg, dataset);
  if (index < 0 || index >= static_cast<int>(m.pairs.size())) {
    throw InvalidArgument("inspect: pair " + std::to_string(index) + " is not in the dataset (" +
                          std::to_string(m.pairs.size()) + " pairs)");
  }
  const auto shapes = load_shapes(m.shapes, m.split);
  const RegistrationPair pair = regenerate_pair(m, shapes, m.pairs[static_cast<std::size_t>(index)]);
  const Model<float> model = Trainer<float>::load_model(checkpoint);
  const RegistrationResult r = register_clouds(model, pair.source, pair.reference, true);

  ObjectiveOptions opt;
  opt.dropout = false;
  ad::Tape<float> tape;
  Rng rng(mix_seed(cfg.seed));
  const auto obj = pair_objective(bind(model, tape, false), pair, cfg.loss, opt, rng);

  Json iters = Json::array();
  for (std::size_t i = 0; i < r.per_iteration.size(); ++i) {
    const PointCloud& xp = r.transformed_sources[i];
    const auto rot = contribution_map(xp, r.source_features[i], Branch::Rotation);
    const auto trans = contribution_map(xp, r.source_features[i], Branch::Translation);
    const auto ref = contribution_map(pair.reference, r.reference_features[i], Branch::Rotation);
    auto distinct = [](const std::vector<int>& v) { return std::count_if(v.begin(), v.end(), [](int k) { return k > 0; }); };
    const TslDistances& d = obj.distances[i];
    iters.push_back(Json{{"iteration", i + 1},
                         {"source_rotation_contributions", rot},
                         {"source_translation_contributions", trans},
                         {"reference_rotation_contributions", ref},
                         {"contributing_points_rotation", distinct(rot)},
                         {"contributing_points_translation", distinct(trans)},
                         {"tsl",
                          {{"r_translated", d.r_translated},
                           {"r_rotated", d.r_rotated},
                           {"t_rotated", d.t_rotated},
                           {"t_translated", d.t_translated},
                           {"r_ratio", d.r_translated / std::max(d.r_rotated, 1e-12)},
                           {"t_ratio", d.t_rotated / std::max(d.t_translated, 1e-12)}}}});
    const int peak = std::max(1, *std::max_element(rot.begin(), rot.end()));
    std::vector<double> weight;
    for (int k : rot) weight.push_back(static_cast<double>(k) / peak);
    cloud_view(dir / ("contribution_iter" + std::to_string(i + 1) + ".svg"),
               "rotation-branch contributions, iteration " + std::to_string(i + 1), {{&xp.points(), "#1f77b4"}}, {},
               &weight);
    std::cout << "iteration " << i + 1 << " contributing_points=" << distinct(rot) << "/" << xp.size()
              << " r_ratio=" << d.r_translated / std::max(d.r_rotated, 1e-12)
              << " t_ratio=" << d.t_rotated / std::max(d.t_translated, 1e-12) << "\n";
  }
  write_json_file(dir / "inspect.json", Json{{"pair", index}, {"shape_id", pair.shape_id}, {"iterations", iters}});
  return 0;
}

int cmd_plot(const std::vector<std::string>& reports, const std::vector<std::string>& registrations,
             const std::string& out, double bin_deg) {
  if (reports.empty() && registrations.empty()) throw InvalidArgument("plot: give --report and/or --registration files");
  const fs::path dir(out);
  fs::create_directories(dir);
  Json summary{{"reports", Json::array()}, {"registrations", Json::array()}};
  std::vector<Series> rot_series, trans_series;
  for (const auto& path : reports) {
    const Json rep = read_json_file(path);
    std::map<int, std::pair<double, int>> by_angle;
    std::vector<std::pair<double, double>> by_t;
    for (const auto& s : rep.at("samples")) {
      auto& bin = by_angle[static_cast<int>(s.at("gt_angle_deg").get<double>() / bin_deg)];
      bin.first += s.at("error_r_deg").get<double>();
      ++bin.second;
      by_t.push_back({s.at("gt_translation").get<double>(), s.at("error_t").get<double>()});
    }
    std::sort(by_t.begin(), by_t.end());
    Series rs{fs::path(path).parent_path().filename().string() + " (" + rep.at("method").get<std::string>() + ")", {}};
    Json bins = Json::array();
    for (const auto& [b, acc] : by_angle) {
      const double center = (b + 0.5) * bin_deg, mean = acc.first / acc.second;
      rs.points.push_back({center, mean});
      bins.push_back(Json{{"angle_deg", center}, {"mean_error_r_deg", mean}, {"count", acc.second}});
    }
    rot_series.push_back(rs);
    trans_series.push_back(Series{rs.label, by_t});
    summary["reports"].push_back(Json{{"file", path}, {"label", rs.label}, {"error_r_by_angle", bins}});
  }
  if (!reports.empty()) {
    line_chart(dir / "error_r_vs_angle.svg", "rotation error vs initial rotation", "ground-truth angle (deg)",
               "Error(R) deg", rot_series);
    line_chart(dir / "error_t_vs_translation.svg", "translation error vs initial translation",
               "ground-truth translation", "Error(t)", trans_series);
  }
  for (std::size_t k = 0; k < registrations.size(); ++k) {
    const Json reg = read_json_file(registrations[k]);
    const PointCloud src = ply::read(reg.at("source").get<std::string>());
    const PointCloud ref = ply::read(reg.at("reference").get<std::string>());
    const PointCloud aligned = ply::read(reg.at("aligned").get<std::string>());
    const auto& last = reg.at("iterations").back();
    auto v = [](const Json& a) { return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>()); };
    const fs::path file = dir / ("saliency_" + std::to_string(k) + ".svg");
    cloud_view(file, "source (blue), reference (red), aligned (green); saliency rings",
               {{&src.points(), "#1f77b4"}, {&ref.points(), "#d62728"}, {&aligned.points(), "#2ca02c"}},
               {{v(last.at("saliency_source")), "#1f77b4"}, {v(last.at("saliency_reference")), "#d62728"}});
    summary["registrations"].push_back(Json{{"file", registrations[k]}, {"plot", file.string()}});
  }
  write_json_file(dir / "plot.json", summary);
  std::cout << "wrote plots to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partial-to-partial point cloud registration"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, reg_c, insp_c;
  std::string resume, method, eval_ck, eval_ds, reg_ck, reg_src, reg_ref, insp_ck, insp_ds, plot_out;
  std::vector<std::string> plot_reports, plot_regs;
  int insp_pair = 0;
  double plot_bin = 5.0;

  auto* gen = app.add_subcommand("generate", "write a dataset manifest and PLY pairs");
  add_common(gen, gen_c);

  auto* train = app.add_subcommand("train", "train a model and write checkpoints and logs");
  add_common(train, train_c);
  train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or ICP on a dataset");
  add_common(eval, eval_c);
  eval->add_option("--method", method, "learned or icp")->check(CLI::IsMember({"learned", "icp"}));
  eval->add_option("--checkpoint", eval_ck, "trained checkpoint")->check(CLI::ExistingFile);
  eval->add_option("--dataset", eval_ds, "manifest.json from generate")->check(CLI::ExistingFile);

  auto* reg = app.add_subcommand("register", "register one source/reference PLY pair");
  add_common(reg, reg_c, false);
  reg->add_option("--checkpoint", reg_ck, "trained checkpoint")->required()->check(CLI::ExistingFile);
  reg->add_option("source", reg_src, "source PLY")->required()->check(CLI::ExistingFile);
  reg->add_option("reference", reg_ref, "reference PLY")->required()->check(CLI::ExistingFile);

  auto* insp = app.add_subcommand("inspect", "feature provenance and sensitivity distances for one pair");
  add_common(insp, insp_c);
  insp->add_option("--checkpoint", insp_ck, "trained checkpoint")->required()->check(CLI::ExistingFile);
  insp->add_option("--dataset", insp_ds, "manifest.json from generate")->check(CLI::ExistingFile);
  insp->add_option("--pair", insp_pair, "pair index");

  auto* plot = app.add_subcommand("plot", "render report and registration files as SVG");
  plot->add_option("--report", plot_reports, "report.json from eval")->check(CLI::ExistingFile);
  plot->add_option("--registration", plot_regs, "registration.json from register")->check(CLI::ExistingFile);
  plot->add_option("--bin", plot_bin, "angle bin width in degrees")->check(CLI::PositiveNumber);
  plot->add_option("--out", plot_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_generate(gen_c);
    if (*train) return cmd_train(train_c, resume);
    if (*eval) return cmd_eval(eval_c, method, eval_ck, eval_ds);
    if (*reg) return cmd_register(reg_ck, reg_src, reg_ref, reg_c);
    if (*insp) return cmd_inspect(insp_c, insp_ck, insp_ds, insp_pair);
    if (*plot) return cmd_plot(plot_reports, plot_regs, plot_out, plot_bin);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
