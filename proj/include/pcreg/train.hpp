#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "pcreg/autograd.hpp"
#include "pcreg/config.hpp"
#include "pcreg/data.hpp"
#include "pcreg/errors.hpp"
#include "pcreg/geometry.hpp"
#include "pcreg/icp.hpp"
#include "pcreg/losses.hpp"
#include "pcreg/metrics.hpp"
#include "pcreg/model.hpp"
#include "pcreg/rng.hpp"
#include "pcreg/train_config.hpp"

namespace pcreg {

struct ObjectiveOptions {
  bool sensitivity = true;
  bool dropout = true;
  /// When set, these per-iteration estimates replace the live ones wherever
  /// the objective treats an estimate as a constant (accumulated transform,
  /// perturbed clouds). Used to make finite-difference checks well posed.
  const std::vector<RigidTransform>* frozen_steps = nullptr;
};

/// Global-feature distances behind the sensitivity loss for one iteration.
struct TslDistances {
  double r_translated = 0.0;  // ||F^r - F^r(X'_t)||, should be small
  double r_rotated = 0.0;     // ||F^r - F^r(X'_r)||
  double t_rotated = 0.0;     // ||F^t - F^t(X'_r)||, should be small
  double t_translated = 0.0;  // ||F^t - F^t(X'_t)||
};

template <typename S>
struct PairObjective {
  ad::Var<S> total;
  ad::Var<S> param;        // mean over iterations
  ad::Var<S> sensitivity;  // invalid when disabled
  ad::Var<S> dropout;      // invalid when disabled
  std::vector<IterationLoss> per_iteration;
  std::vector<TslDistances> distances;
  std::vector<RigidTransform> steps;  // live per-iteration estimates
  RigidTransform estimate;
};

namespace detail {

template <typename S>
ad::Var<S> row_constant(ad::Tape<S>& tape, std::initializer_list<double> values) {
  ad::Matrix<S> m(1, static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) m(0, i++) = static_cast<S>(v);
  return tape.constant(std::move(m));
}

template <typename S>
ad::Var<S> quaternion_constant(ad::Tape<S>& tape, const Quaternion& q) {
  return row_constant(tape, {q.w, q.x, q.y, q.z});
}

template <typename S>
ad::Var<S> vector_constant(ad::Tape<S>& tape, const Vec3& v) {
  return row_constant(tape, {v.x(), v.y(), v.z()});
}

template <typename S>
double distance(const ad::Var<S>& a, const ad::Var<S>& b) {
  return (a.value() - b.value()).template cast<double>().norm();
}

template <typename S>
ad::Var<S> dropout_term(const Bound<S>& p, const std::array<EncodedCloud<S>, 2>& enc, const LossConfig& loss,
                        Rng& rng) {
  const Eigen::Index rows = enc[0].pointwise.front().rows();
  if (loss.dropout_per_element) {
    std::vector<ad::Matrix<S>> masks;
    for (const auto& f : enc[0].pointwise) masks.push_back(dropout_element_mask<S>(rows, f.cols(), loss.dropout_ratio, rng));
    return pfdl(enc[0].global, masked_global(enc[0], masks), enc[1].global, masked_global(enc[1], masks));
  }
  const auto mask = dropout_mask<S>(rows, loss.dropout_ratio, rng);
  return pfdl(enc[0].global, masked_global(enc[0], mask), enc[1].global, masked_global(enc[1], mask));
}

}  // namespace detail

/// Loss of one pair over all registration iterations. At iteration i the
/// target is residual_transform(gt, accumulated estimate).
template <typename S>
PairObjective<S> pair_objective(const Bound<S>& p, const RegistrationPair& pair, const LossConfig& loss,
                                const ObjectiveOptions& opt, Rng& rng) {
  ad::Tape<S>& tape = *p.tape;
  const ModelConfig& cfg = p.config();
  if (opt.frozen_steps && static_cast<int>(opt.frozen_steps->size()) < cfg.iterations) {
    throw InvalidArgument("pair_objective: frozen_steps shorter than the iteration count");
  }
  PairObjective<S> out;
  const ad::Var<S> y = tape.constant(to_matrix<S>(pair.reference));
  const ad::Var<S> x0 = tape.constant(to_matrix<S>(pair.source));
  const ad::Var<S> identity_q = detail::quaternion_constant<S>(tape, Quaternion::identity());
  const ad::Var<S> zero_t = detail::vector_constant<S>(tape, Vec3::Zero());
  ad::Var<S> acc_q = identity_q, acc_t = zero_t;
  RigidTransform acc = RigidTransform::identity();
  std::vector<ad::Var<S>> lp, ls, ld, terms;

  for (int it = 0; it < cfg.iterations; ++it) {
    ad::Var<S> xp;
    if (cfg.detach_iterations) {
      xp = tape.constant(to_matrix<S>(apply(acc, pair.source)));
    } else {
      xp = it == 0 ? x0 : ad::transform_points(x0, acc_q, acc_t);
    }
    IterationForward<S> f = forward_iteration(p, xp, y);
    const RigidTransform live = transform_from(f.rotation, f.translation);
    const RigidTransform step = opt.frozen_steps ? (*opt.frozen_steps)[static_cast<std::size_t>(it)] : live;
    out.steps.push_back(live);

    IterationLoss il;
    ad::Var<S> l_p = param_loss(f.rotation, f.translation, residual_transform(pair.gt, acc), loss.lambda_t);
    il.param = static_cast<double>(l_p.scalar());
    lp.push_back(l_p);
    ad::Var<S> term = l_p;

    if (opt.sensitivity) {
      const ad::Var<S> q_d = detail::quaternion_constant<S>(tape, step.rotation);
      const ad::Var<S> t_d = detail::vector_constant<S>(tape, step.translation);
      const ad::Var<S> x_r = ad::transform_points(xp, q_d, zero_t);
      const ad::Var<S> x_t = ad::transform_points(xp, identity_q, t_d);
      const auto rot_r = encode_against(p, x_r, f.reference[0].summaries, Branch::Rotation);
      const auto rot_t = encode_against(p, x_t, f.reference[0].summaries, Branch::Rotation);
      const auto trans_r = encode_against(p, x_r, f.reference[1].summaries, Branch::Translation);
      const auto trans_t = encode_against(p, x_t, f.reference[1].summaries, Branch::Translation);
      const auto& fr = f.source[0].global;
      const auto& ft = f.source[1].global;
      ad::Var<S> l_s = tsl(fr, rot_r.global, rot_t.global, ft, trans_r.global, trans_t.global, loss.delta,
                           loss.tsl_hinge_at_zero);
      out.distances.push_back({detail::distance(fr, rot_t.global), detail::distance(fr, rot_r.global),
                               detail::distance(ft, trans_r.global), detail::distance(ft, trans_t.global)});
      il.sensitivity = static_cast<double>(l_s.scalar());
      ls.push_back(l_s);
      term = ad::add(term, ad::scale(l_s, static_cast<S>(loss.beta)));
    }

    if (opt.dropout) {
      ad::Var<S> l_d = ad::add(detail::dropout_term(p, f.source, loss, rng), detail::dropout_term(p, f.reference, loss, rng));
      il.dropout = static_cast<double>(l_d.scalar());
      ld.push_back(l_d);
      term = ad::add(term, ad::scale(l_d, static_cast<S>(loss.gamma)));
    }

    terms.push_back(term);
    out.per_iteration.push_back(il);
    acc = compose(step, acc);
    if (!cfg.detach_iterations) {
      acc_q = ad::quaternion_multiply(f.rotation, acc_q);
      acc_t = ad::transform_points(acc_t, f.rotation, f.translation);
    }
  }
  out.total = ad::mean_n(terms);
  out.param = ad::mean_n(lp);
  if (!ls.empty()) out.sensitivity = ad::mean_n(ls);
  if (!ld.empty()) out.dropout = ad::mean_n(ld);
  out.estimate = acc;
  return out;
}

struct StepLog {
  int step = 0;
  double total = 0.0;
  double param = 0.0;
  double sensitivity = 0.0;
  double dropout = 0.0;
  double wall_seconds = 0.0;

  /// One machine-parseable key=value line.
  [[nodiscard]] std::string format() const {
    std::ostringstream os;
    os.precision(9);
    os << "step=" << step << " total=" << total << " param=" << param << " sensitivity=" << sensitivity
       << " dropout=" << dropout;
    os.precision(4);
    os << std::fixed << " wall=" << wall_seconds;
    return os.str();
  }
};

/// Pairs for one training step: the fixed set when `train.fixed_pairs` is
/// used, otherwise fresh pairs seeded by (train seed, step, slot).
inline std::vector<RegistrationPair> training_batch(const std::vector<Shape>& shapes, const DataConfig& data,
                                                    const TrainConfig& train, int step,
                                                    const std::vector<RegistrationPair>& fixed = {}) {
  std::vector<RegistrationPair> batch;
  batch.reserve(static_cast<std::size_t>(train.batch_size));
  if (!fixed.empty()) {
    const std::size_t k = fixed.size();
    for (int j = 0; j < train.batch_size; ++j) {
      batch.push_back(fixed[(static_cast<std::size_t>(step) * static_cast<std::size_t>(train.batch_size) + j) % k]);
    }
    return batch;
  }
  if (shapes.empty()) throw InvalidArgument("training_batch: no shapes");
  const std::uint64_t step_seed = derive_seed(train.seed, static_cast<std::uint64_t>(step));
  for (int j = 0; j < train.batch_size; ++j) {
    const std::uint64_t s = derive_seed(step_seed, static_cast<std::uint64_t>(j));
    batch.push_back(make_pair(shapes[s % shapes.size()], data, s));
  }
  return batch;
}

/// Fixed pairs i = 0..k-1 from shapes i mod |shapes|, seeded by (seed, i).
inline std::vector<RegistrationPair> fixed_pairs(const std::vector<Shape>& shapes, const DataConfig& data,
                                                 std::uint64_t seed, int k) {
  if (shapes.empty()) throw InvalidArgument("fixed_pairs: no shapes");
  std::vector<RegistrationPair> out;
  for (int i = 0; i < k; ++i) {
    out.push_back(make_pair(shapes[static_cast<std::size_t>(i) % shapes.size()], data,
                            derive_seed(seed, static_cast<std::uint64_t>(i))));
  }
  return out;
}

inline constexpr char kCheckpointMagic[8] = {'P', 'C', 'R', 'E', 'G', 'C', 'K', '1'};

inline std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

/// Adam training of a Model<S>. Gradients of a batch are summed pair by
/// pair in batch order, so a run is bitwise reproducible single-threaded.
template <typename S = float>
class Trainer {
 public:
  Trainer(const ModelConfig& model, const LossConfig& loss, const TrainConfig& train)
      : model_(model), loss_(loss), train_(train), rng_(mix_seed(train.seed)) {
    loss_.validate();
    train_.validate();
    for (const auto& v : model_.params().values) {
      m_.push_back(ad::Matrix<S>::Zero(v.rows(), v.cols()));
      v_.push_back(ad::Matrix<S>::Zero(v.rows(), v.cols()));
    }
  }

  [[nodiscard]] const Model<S>& model() const { return model_; }
  [[nodiscard]] const LossConfig& loss_config() const { return loss_; }
  [[nodiscard]] const TrainConfig& train_config() const { return train_; }
  [[nodiscard]] int steps_done() const { return step_; }
  [[nodiscard]] std::uint64_t config_hash() const {
    return training_config_hash(model_.config(), loss_, train_);
  }

  StepLog step(const std::vector<RegistrationPair>& batch) {
    if (batch.empty()) throw InvalidArgument("train step: empty batch");
    const auto t0 = std::chrono::steady_clock::now();
    const bool perturb = step_ % train_.perturbation_every == 0;
    ObjectiveOptions opt;
    opt.sensitivity = train_.enable_tsl && perturb;
    opt.dropout = train_.enable_pfdl && perturb;

    std::vector<ad::Matrix<S>> grads;
    for (const auto& v : model_.params().values) grads.push_back(ad::Matrix<S>::Zero(v.rows(), v.cols()));
    StepLog log;
    log.step = step_ + 1;
    for (const auto& pair : batch) {
      ad::Tape<S> tape;
      const Bound<S> p = bind(model_, tape, true);
      PairObjective<S> obj;
      try {
        obj = pair_objective(p, pair, loss_, opt, rng_);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("step " + std::to_string(log.step) + ": " + e.what());
      }
      const double total = static_cast<double>(obj.total.scalar());
      const double lp = static_cast<double>(obj.param.scalar());
      const double lsv = obj.sensitivity.valid() ? static_cast<double>(obj.sensitivity.scalar()) : 0.0;
      const double ldv = obj.dropout.valid() ? static_cast<double>(obj.dropout.scalar()) : 0.0;
      if (!std::isfinite(total)) {
        std::ostringstream os;
        os << "step " << log.step << ": non-finite loss (param=" << lp << " sensitivity=" << lsv << " dropout=" << ldv
           << ")";
        throw NonFiniteError(os.str());
      }
      log.total += total;
      log.param += lp;
      log.sensitivity += lsv;
      log.dropout += ldv;
      tape.backward(obj.total);
      for (std::size_t i = 0; i < grads.size(); ++i) {
        if (tape.has_grad(p.vars[i].id)) grads[i] += tape.grad_ref(p.vars[i].id);
      }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    log.total *= inv;
    log.param *= inv;
    log.sensitivity *= inv;
    log.dropout *= inv;
    adam_update(grads, static_cast<S>(inv));
    ++step_;
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return log;
  }

  void save_checkpoint(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_pod<std::uint32_t>(out, sizeof(S));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(step_));
    write_pod<std::uint64_t>(out, adam_t_);
    const auto& ps = model_.params();
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ps.tensor_count()));
    for (std::size_t i = 0; i < ps.tensor_count(); ++i) {
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ps.names[i].size()));
      out.write(ps.names[i].data(), static_cast<std::streamsize>(ps.names[i].size()));
      write_matrix(out, ps.values[i]);
      write_matrix(out, m_[i]);
      write_matrix(out, v_[i]);
    }
    if (!out) throw CheckpointError("failed writing " + path.string());
    Json side{{"format_version", 1},
              {"config_hash", hex64(config_hash())},
              {"step", step_},
              {"rng_state", rng_state(rng_)},
              {"model", to_json(model_.config())},
              {"loss", to_json(loss_)},
              {"train", to_json(train_)}};
    write_json_file(sidecar_path(path), side);
  }

  /// Restores parameters, optimizer moments, step count and rng state.
  /// Refuses checkpoints written under different hyper-parameters.
  void load_checkpoint(const std::filesystem::path& path) {
    const Json side = read_sidecar(path);
    const std::string expected = hex64(config_hash());
    if (side.at("config_hash").get<std::string>() != expected) {
      throw CheckpointError("config hash mismatch: checkpoint " + side.at("config_hash").get<std::string>() +
                            ", current configuration " + expected);
    }
    read_binary(path, &model_, &m_, &v_, &step_, &adam_t_);
    if (step_ != side.at("step").get<int>()) throw CheckpointError("checkpoint step disagrees with its sidecar");
    restore_rng_state(rng_, side.at("rng_state").get<std::string>());
  }

  static Json read_sidecar(const std::filesystem::path& path) {
    try {
      return read_json_file(sidecar_path(path));
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("checkpoint metadata: ") + e.what());
    }
  }

  /// Model parameters only, for inference.
  static Model<S> load_model(const std::filesystem::path& path) {
    const Json side = read_sidecar(path);
    ModelConfig mc;
    LossConfig lc;
    TrainConfig tc;
    try {
      from_json(side.at("model"), mc);
      from_json(side.at("loss"), lc);
      from_json(side.at("train"), tc);
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("checkpoint metadata: ") + e.what());
    }
    if (hex64(training_config_hash(mc, lc, tc)) != side.at("config_hash").get<std::string>()) {
      throw CheckpointError("checkpoint metadata does not match its config hash");
    }
    Model<S> model(mc);
    int step = 0;
    std::uint64_t t = 0;
    read_binary(path, &model, nullptr, nullptr, &step, &t);
    return model;
  }

 private:
  void adam_update(const std::vector<ad::Matrix<S>>& grads, S grad_scale) {
    ++adam_t_;
    const S b1 = static_cast<S>(train_.adam_beta1), b2 = static_cast<S>(train_.adam_beta2);
    const S lr = static_cast<S>(train_.learning_rate), eps = static_cast<S>(train_.adam_epsilon);
    const S c1 = static_cast<S>(1.0 - std::pow(train_.adam_beta1, static_cast<double>(adam_t_)));
    const S c2 = static_cast<S>(1.0 - std::pow(train_.adam_beta2, static_cast<double>(adam_t_)));
    auto& values = model_.params().values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto g = (grads[i] * grad_scale).array();
      m_[i].array() = b1 * m_[i].array() + (S(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (S(1) - b2) * g.square();
      values[i].array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

  template <typename T>
  static void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  template <typename T>
  static T read_pod(std::istream& in, const std::filesystem::path& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw CheckpointError("truncated checkpoint " + path.string());
    return v;
  }

  static void write_matrix(std::ostream& out, const ad::Matrix<S>& m) {
    write_pod<std::int64_t>(out, m.rows());
    write_pod<std::int64_t>(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(S) * m.size()));
  }

  static void read_matrix(std::istream& in, const std::filesystem::path& path, ad::Matrix<S>& m,
                          const std::string& name) {
    const auto rows = read_pod<std::int64_t>(in, path);
    const auto cols = read_pod<std::int64_t>(in, path);
    if (rows != m.rows() || cols != m.cols()) {
      throw CheckpointError("tensor " + name + " has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                            " but the model expects " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(S) * m.size()));
    if (!in) throw CheckpointError("truncated checkpoint " + path.string());
  }

  static void read_binary(const std::filesystem::path& path, Model<S>* model, std::vector<ad::Matrix<S>>* m,
                          std::vector<ad::Matrix<S>>* v, int* step, std::uint64_t* adam_t) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
      throw CheckpointError(path.string() + " is not a checkpoint");
    }
    if (read_pod<std::uint32_t>(in, path) != sizeof(S)) throw CheckpointError("checkpoint scalar type differs");
    *step = static_cast<int>(read_pod<std::uint64_t>(in, path));
    *adam_t = read_pod<std::uint64_t>(in, path);
    auto& ps = model->params();
    if (read_pod<std::uint32_t>(in, path) != ps.tensor_count()) throw CheckpointError("checkpoint tensor count differs");
    ad::Matrix<S> scratch;
    for (std::size_t i = 0; i < ps.tensor_count(); ++i) {
      const auto len = read_pod<std::uint32_t>(in, path);
      std::string name(len, '\0');
      in.read(name.data(), len);
      if (!in || name != ps.names[i]) throw CheckpointError("checkpoint tensor " + std::to_string(i) + " is '" + name +
                                                            "', expected '" + ps.names[i] + "'");
      read_matrix(in, path, ps.values[i], name);
      scratch.resize(ps.values[i].rows(), ps.values[i].cols());
      read_matrix(in, path, m ? (*m)[i] : scratch, name);
      read_matrix(in, path, v ? (*v)[i] : scratch, name);
    }
  }

  Model<S> model_;
  LossConfig loss_;
  TrainConfig train_;
  Rng rng_;
  int step_ = 0;
  std::uint64_t adam_t_ = 0;
  std::vector<ad::Matrix<S>> m_, v_;
};

/// Learned registration of every pair against its ground truth.
template <typename S>
MetricsReport evaluate_learned(const Model<S>& model, const std::vector<RegistrationPair>& pairs,
                               std::vector<RegistrationResult>* results = nullptr) {
  std::vector<SampleErrors> errors;
  for (const auto& pair : pairs) {
    RegistrationResult r = register_clouds(model, pair.source, pair.reference);
    errors.push_back(sample_errors(r.final_transform, pair.gt));
    if (results) results->push_back(std::move(r));
  }
  return aggregate(errors);
}

inline MetricsReport evaluate_icp(const std::vector<RegistrationPair>& pairs, const IcpConfig& cfg,
                                  std::vector<IcpResult>* results = nullptr) {
  std::vector<SampleErrors> errors;
  for (const auto& pair : pairs) {
    IcpResult r = icp(pair.source, pair.reference, RigidTransform::identity(), cfg);
    errors.push_back(sample_errors(r.transform, pair.gt));
    if (results) results->push_back(std::move(r));
  }
  return aggregate(errors);
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median: no values");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

struct ObjectiveSummary {
  double total = 0.0;
  double param = 0.0;
  double sensitivity = 0.0;
  double dropout = 0.0;
  std::vector<TslDistances> distances;  // every iteration of every pair
  double median_r_translated = 0.0;
  double median_r_rotated = 0.0;
  double median_t_rotated = 0.0;
  double median_t_translated = 0.0;
};

/// Objective averaged over pairs without updating anything. Dropout masks
/// come from a fixed seed.
template <typename S>
ObjectiveSummary evaluate_objective(const Model<S>& model, const std::vector<RegistrationPair>& pairs,
                                    const LossConfig& loss, ObjectiveOptions opt, std::uint64_t seed = 0) {
  if (pairs.empty()) throw InvalidArgument("evaluate_objective: no pairs");
  ObjectiveSummary s;
  Rng rng(mix_seed(seed));
  for (const auto& pair : pairs) {
    ad::Tape<S> tape;
    const Bound<S> p = bind(model, tape, false);
    const PairObjective<S> obj = pair_objective(p, pair, loss, opt, rng);
    s.total += static_cast<double>(obj.total.scalar());
    s.param += static_cast<double>(obj.param.scalar());
    if (obj.sensitivity.valid()) s.sensitivity += static_cast<double>(obj.sensitivity.scalar());
    if (obj.dropout.valid()) s.dropout += static_cast<double>(obj.dropout.scalar());
    s.distances.insert(s.distances.end(), obj.distances.begin(), obj.distances.end());
  }
  const double n = static_cast<double>(pairs.size());
  s.total /= n;
  s.param /= n;
  s.sensitivity /= n;
  s.dropout /= n;
  if (!s.distances.empty()) {
    auto column = [&](double TslDistances::*field) {
      std::vector<double> v;
      for (const auto& d : s.distances) v.push_back(d.*field);
      return median(v);
    };
    s.median_r_translated = column(&TslDistances::r_translated);
    s.median_r_rotated = column(&TslDistances::r_rotated);
    s.median_t_rotated = column(&TslDistances::t_rotated);
    s.median_t_translated = column(&TslDistances::t_translated);
  }
  return s;
}

struct OverfitOptions {
  int pairs = 8;
  std::uint64_t data_seed = 1;
  double max_error_r_deg = 5.0;
  double max_error_t = 0.05;
  std::function<void(const StepLog&)> on_step;
};

struct OverfitResult {
  bool passed = false;
  MetricsReport report;
  ObjectiveSummary objective;  // with every loss term enabled
  std::vector<StepLog> trace;
  Model<float> model;
  std::vector<RegistrationPair> pairs;
  double seconds = 0.0;
};

/// Trains on a few fixed pairs for `cfg.train.steps` steps and evaluates on
/// the same pairs.
inline OverfitResult overfit_harness(const RunConfig& cfg, const OverfitOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  OverfitResult res;
  const auto shapes = load_shapes(cfg.shapes, Split::Train);
  res.pairs = fixed_pairs(shapes, cfg.data, opt.data_seed, opt.pairs);
  Trainer<float> trainer(cfg.model, cfg.loss, cfg.train);
  for (int s = 0; s < cfg.train.steps; ++s) {
    StepLog log = trainer.step(training_batch(shapes, cfg.data, cfg.train, s, res.pairs));
    if (opt.on_step) opt.on_step(log);
    res.trace.push_back(log);
  }
  res.model = trainer.model();
  res.report = evaluate_learned(res.model, res.pairs);
  res.objective = evaluate_objective(res.model, res.pairs, cfg.loss, ObjectiveOptions{}, opt.data_seed);
  res.passed = res.report.error_r < opt.max_error_r_deg && res.report.error_t < opt.max_error_t;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace pcreg
