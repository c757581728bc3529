#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pcreg/autograd.hpp"
#include "pcreg/errors.hpp"
#include "pcreg/geometry.hpp"
#include "pcreg/rng.hpp"

namespace pcreg {

inline constexpr double kOutputInitScale = 0.01;

/// Architecture of the dual-branch registration network.
struct ModelConfig {
  std::vector<int> block_channels = {64, 64, 128, 256};
  /// 1-based indices of blocks that also consume the other cloud's
  /// max-pooled features from the previous block.
  std::vector<int> pfi_positions = {3, 4};
  int gfi_hidden = 512;
  int gfi_out = 512;
  std::vector<int> rotation_head = {512, 256};
  std::vector<int> translation_head = {512, 256};
  int iterations = 4;
  /// Treat the accumulated transform as a constant at the start of every
  /// iteration (no gradient through the re-transformed source).
  bool detach_iterations = true;
  bool enable_pfi = true;
  bool enable_gfi = true;
  bool dual_branch = true;
  /// Row-wise layer normalization after every hidden affine map.
  bool layer_norm = false;
  std::uint64_t init_seed = 1;

  [[nodiscard]] int feature_dim() const {
    int sum = 0;
    for (int c : block_channels) sum += c;
    return sum;
  }
  [[nodiscard]] int hybrid_dim() const { return enable_gfi ? gfi_out : feature_dim(); }
  [[nodiscard]] bool pfi_at(int block) const {
    return enable_pfi && std::find(pfi_positions.begin(), pfi_positions.end(), block) != pfi_positions.end();
  }

  void validate() const {
    const int k = static_cast<int>(block_channels.size());
    if (k < 2) throw ConfigError("model: at least two encoder blocks are required");
    for (int c : block_channels) {
      if (c < 1) throw ConfigError("model: block widths must be positive");
    }
    for (int p : pfi_positions) {
      if (p < 2 || p > k) throw ConfigError("model: pfi positions must lie in 2..K");
    }
    if (iterations < 1) throw ConfigError("model: iterations must be >= 1");
    if (gfi_hidden < 1 || gfi_out < 1) throw ConfigError("model: gfi widths must be positive");
    for (int c : rotation_head) {
      if (c < 1) throw ConfigError("model: head widths must be positive");
    }
    for (int c : translation_head) {
      if (c < 1) throw ConfigError("model: head widths must be positive");
    }
  }

  /// Tiny widths used by gradient and invariance checks.
  static ModelConfig test_profile() {
    ModelConfig c;
    c.block_channels = {8, 8, 16, 16};
    c.gfi_hidden = 32;
    c.gfi_out = 32;
    c.rotation_head = {32, 16};
    c.translation_head = {32, 16};
    return c;
  }

  /// Widths sized for single-machine overfit runs.
  static ModelConfig desk_profile() {
    ModelConfig c;
    c.block_channels = {32, 32, 64, 128};
    c.gfi_hidden = 256;
    c.gfi_out = 128;
    c.rotation_head = {256, 128};
    c.translation_head = {256, 128};
    return c;
  }
};

enum class Branch { Rotation = 0, Translation = 1 };

/// Named dense tensors in a fixed order. The order is part of the
/// checkpoint format.
template <typename S>
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<ad::Matrix<S>> values;

  int add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    names.push_back(std::move(name));
    values.emplace_back(ad::Matrix<S>::Zero(rows, cols));
    return static_cast<int>(values.size()) - 1;
  }
  [[nodiscard]] std::size_t tensor_count() const { return values.size(); }
  [[nodiscard]] std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values) n += static_cast<std::size_t>(v.size());
    return n;
  }
};

/// One dense layer; `w_other`, `gain` and `bias` are -1 when absent.
struct DenseLayer {
  int w = -1;
  int w_other = -1;
  int b = -1;
  int gain = -1;
  int bias = -1;
  bool hidden = true;  // normalization + nonlinearity follow the affine map
};

struct BranchLayout {
  std::vector<DenseLayer> blocks;
  std::vector<DenseLayer> gfi;
};

template <typename S>
class Model {
 public:
  Model() = default;

  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build_layout();
    initialize();
  }

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] const ParameterSet<S>& params() const { return params_; }
  ParameterSet<S>& params() { return params_; }
  [[nodiscard]] const BranchLayout& branch(Branch b) const {
    return branches_[cfg_.dual_branch ? static_cast<int>(b) : 0];
  }
  [[nodiscard]] const BranchLayout& gfi_branch(Branch b) const { return branches_[static_cast<int>(b)]; }
  [[nodiscard]] const std::vector<DenseLayer>& rotation_head() const { return rot_head_; }
  [[nodiscard]] const std::vector<DenseLayer>& translation_head() const { return trans_head_; }

  template <typename T>
  [[nodiscard]] Model<T> cast() const {
    Model<T> out;
    out.cfg_ = cfg_;
    out.branches_ = branches_;
    out.rot_head_ = rot_head_;
    out.trans_head_ = trans_head_;
    out.params_.names = params_.names;
    for (const auto& v : params_.values) out.params_.values.push_back(v.template cast<T>());
    return out;
  }

 private:
  template <typename>
  friend class Model;

  DenseLayer add_layer(const std::string& name, int in, int out, bool hidden, int other_in = 0) {
    DenseLayer l;
    l.hidden = hidden;
    l.w = params_.add(name + ".weight", in, out);
    if (other_in > 0) l.w_other = params_.add(name + ".weight_other", other_in, out);
    l.b = params_.add(name + ".bias", 1, out);
    if (hidden && cfg_.layer_norm) {
      l.gain = params_.add(name + ".norm_gain", 1, out);
      l.bias = params_.add(name + ".norm_bias", 1, out);
    }
    return l;
  }

  void build_branch(BranchLayout& layout, const std::string& prefix, bool with_encoder) {
    if (with_encoder) {
      int in = 3;
      for (int k = 0; k < static_cast<int>(cfg_.block_channels.size()); ++k) {
        const int out = cfg_.block_channels[k];
        const int other = cfg_.pfi_at(k + 1) ? in : 0;
        layout.blocks.push_back(add_layer(prefix + ".block" + std::to_string(k + 1), in, out, true, other));
        in = out;
      }
    }
    if (cfg_.enable_gfi) {
      layout.gfi.push_back(add_layer(prefix + ".gfi1", 2 * cfg_.feature_dim(), cfg_.gfi_hidden, true));
      layout.gfi.push_back(add_layer(prefix + ".gfi2", cfg_.gfi_hidden, cfg_.gfi_out, true));
    }
  }

  std::vector<DenseLayer> build_head(const std::string& prefix, int in, const std::vector<int>& hidden, int out) {
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      layers.push_back(add_layer(prefix + std::to_string(i + 1), in, hidden[i], true));
      in = hidden[i];
    }
    layers.push_back(add_layer(prefix + std::to_string(hidden.size() + 1), in, out, false));
    return layers;
  }

  void build_layout() {
    branches_.assign(2, {});
    build_branch(branches_[0], "rot", true);
    build_branch(branches_[1], "trans", cfg_.dual_branch);
    const int h = cfg_.hybrid_dim();
    rot_head_ = build_head("rot_head.fc", 4 * h, cfg_.rotation_head, 4);
    trans_head_ = build_head("trans_head.fc", 3 * h, cfg_.translation_head, 3);
  }

  /// He-uniform weights, fan-in uniform biases; unit gain, zero shift for norms.
  void initialize() {
    Rng rng(cfg_.init_seed);
    std::vector<int> fan_in(params_.values.size(), 0);
    auto note = [&](const DenseLayer& l) {
      const int fi = static_cast<int>(params_.values[l.w].rows()) +
                     (l.w_other >= 0 ? static_cast<int>(params_.values[l.w_other].rows()) : 0);
      fan_in[l.w] = fi;
      if (l.w_other >= 0) fan_in[l.w_other] = fi;
      fan_in[l.b] = fi;
    };
    for (const auto& br : branches_) {
      for (const auto& l : br.blocks) note(l);
      for (const auto& l : br.gfi) note(l);
    }
    for (const auto& l : rot_head_) note(l);
    for (const auto& l : trans_head_) note(l);
    for (std::size_t i = 0; i < params_.values.size(); ++i) {
      auto& v = params_.values[i];
      const std::string& name = params_.names[i];
      if (name.ends_with(".norm_gain")) {
        v.setOnes();
      } else if (name.ends_with(".norm_bias")) {
        v.setZero();
      } else {
        const double fi = static_cast<double>(std::max(fan_in[i], 1));
        const double bound = name.ends_with(".bias") ? 1.0 / std::sqrt(fi) : std::sqrt(6.0 / fi);
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index j = 0; j < v.size(); ++j) v.data()[j] = static_cast<S>(u(rng));
      }
    }
    // Output layers start near the identity transform so that every
    // iteration initially sees an unperturbed source.
    for (const DenseLayer* l : {&rot_head_.back(), &trans_head_.back()}) {
      params_.values[l->w] *= static_cast<S>(kOutputInitScale);
      params_.values[l->b].setZero();
    }
    params_.values[rot_head_.back().b](0, 0) = S(1);
  }

  ModelConfig cfg_;
  ParameterSet<S> params_;
  std::vector<BranchLayout> branches_;
  std::vector<DenseLayer> rot_head_;
  std::vector<DenseLayer> trans_head_;
};

/// Model parameters placed on a tape, either as trainable variables or as
/// constants (inference).
template <typename S>
struct Bound {
  const Model<S>* model = nullptr;
  ad::Tape<S>* tape = nullptr;
  std::vector<ad::Var<S>> vars;

  [[nodiscard]] ad::Var<S> operator[](int idx) const { return vars[idx]; }
  [[nodiscard]] const ModelConfig& config() const { return model->config(); }
};

template <typename S>
Bound<S> bind(const Model<S>& model, ad::Tape<S>& tape, bool trainable) {
  Bound<S> b{&model, &tape, {}};
  b.vars.reserve(model.params().values.size());
  for (const auto& v : model.params().values) b.vars.push_back(trainable ? tape.variable(v) : tape.constant(v));
  return b;
}

/// Per-cloud output of one branch encoder.
template <typename S>
struct EncodedCloud {
  std::vector<ad::Var<S>> pointwise;  // f^(k), N x C_k
  std::vector<ad::Var<S>> summaries;  // channel-wise max of f^(k), 1 x C_k
  ad::Var<S> global;                  // concatenated summaries, 1 x sum(C_k)
};

namespace detail {

template <typename S>
ad::Var<S> apply_hidden(const Bound<S>& p, const DenseLayer& l, ad::Var<S> pre) {
  if (!l.hidden) return pre;
  if (l.gain < 0) return ad::softplus(pre);
  return ad::softplus(ad::layer_norm_rows(pre, p[l.gain], p[l.bias]));
}

template <typename S>
ad::Var<S> dense(const Bound<S>& p, const DenseLayer& l, ad::Var<S> x) {
  return apply_hidden(p, l, ad::linear(x, p[l.w], p[l.b]));
}

/// Block whose input is cat[f_self, repeat(summary_other)]; the concatenated
/// product is split into a per-point term and one broadcast row.
template <typename S>
ad::Var<S> dense_with_summary(const Bound<S>& p, const DenseLayer& l, ad::Var<S> x, ad::Var<S> summary) {
  if (summary.cols() != p[l.w_other].rows()) {
    throw ShapeError("point-wise interaction: summary width " + std::to_string(summary.cols()) + " but block expects " +
                     std::to_string(p[l.w_other].rows()));
  }
  ad::Var<S> broadcast = ad::linear(summary, p[l.w_other], p[l.b]);
  return apply_hidden(p, l, ad::add_row(ad::matmul(x, p[l.w]), broadcast));
}

template <typename S>
ad::Var<S> mlp(const Bound<S>& p, const std::vector<DenseLayer>& layers, ad::Var<S> x) {
  for (const auto& l : layers) x = dense(p, l, x);
  return x;
}

template <typename S>
void check_finite(const ad::Var<S>& v, const char* what) {
  if (!v.value().allFinite()) throw NonFiniteError(std::string("non-finite values in ") + what);
}

}  // namespace detail

/// Runs one branch encoder on a single cloud. Blocks with point-wise
/// interaction consume `other_summaries[k - 1]` (the other cloud's max-pooled
/// features from the previous level).
template <typename S>
EncodedCloud<S> encode_against(const Bound<S>& p, ad::Var<S> cloud, const std::vector<ad::Var<S>>& other_summaries,
                               Branch branch) {
  if (cloud.rows() < 1 || cloud.cols() != 3) throw ShapeError("encoder: expected a non-empty N x 3 cloud");
  const auto& blocks = p.model->branch(branch).blocks;
  EncodedCloud<S> out;
  ad::Var<S> f = cloud;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const DenseLayer& l = blocks[k];
    if (l.w_other >= 0) {
      if (other_summaries.size() < k) throw ShapeError("encoder: missing interaction summary for block " + std::to_string(k + 1));
      f = detail::dense_with_summary(p, l, f, other_summaries[k - 1]);
    } else {
      f = detail::dense(p, l, f);
    }
    out.pointwise.push_back(f);
    out.summaries.push_back(ad::max_rows(f));
  }
  out.global = ad::concat_cols(out.summaries);
  return out;
}

/// Encodes both clouds level by level so every interaction block sees the
/// other cloud's features from the same level.
template <typename S>
std::pair<EncodedCloud<S>, EncodedCloud<S>> encode_pair(const Bound<S>& p, ad::Var<S> x, ad::Var<S> y, Branch branch) {
  if (x.rows() < 1 || y.rows() < 1 || x.cols() != 3 || y.cols() != 3) {
    throw ShapeError("encoder: expected non-empty N x 3 clouds");
  }
  const auto& blocks = p.model->branch(branch).blocks;
  EncodedCloud<S> ex, ey;
  ad::Var<S> fx = x, fy = y;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const DenseLayer& l = blocks[k];
    if (l.w_other >= 0) {
      ad::Var<S> sx = ex.summaries.back(), sy = ey.summaries.back();
      fx = detail::dense_with_summary(p, l, fx, sy);
      fy = detail::dense_with_summary(p, l, fy, sx);
    } else {
      fx = detail::dense(p, l, fx);
      fy = detail::dense(p, l, fy);
    }
    ex.pointwise.push_back(fx);
    ey.pointwise.push_back(fy);
    ex.summaries.push_back(ad::max_rows(fx));
    ey.summaries.push_back(ad::max_rows(fy));
  }
  ex.global = ad::concat_cols(ex.summaries);
  ey.global = ad::concat_cols(ey.summaries);
  return {std::move(ex), std::move(ey)};
}

/// Point-wise interaction in isolation: block(cat[f_self, repeat(max(f_other))]).
template <typename S>
ad::Var<S> pfi(const Bound<S>& p, const DenseLayer& block, ad::Var<S> f_self, ad::Var<S> f_other) {
  if (f_self.cols() != f_other.cols()) throw ShapeError("pfi: channel mismatch between clouds");
  if (block.w_other < 0) throw ShapeError("pfi: block has no interaction weights");
  return detail::dense_with_summary(p, block, f_self, ad::max_rows(f_other));
}

/// Global feature after zeroing point rows (row mask) or individual entries
/// (element masks, one per block) before every max-pool.
template <typename S>
ad::Var<S> masked_global(const EncodedCloud<S>& enc, const Eigen::Matrix<S, Eigen::Dynamic, 1>& row_mask) {
  std::vector<ad::Var<S>> parts;
  for (const auto& f : enc.pointwise) parts.push_back(ad::max_rows(ad::scale_rows(f, row_mask)));
  return ad::concat_cols(parts);
}

template <typename S>
ad::Var<S> masked_global(const EncodedCloud<S>& enc, const std::vector<ad::Matrix<S>>& element_masks) {
  std::vector<ad::Var<S>> parts;
  for (std::size_t k = 0; k < enc.pointwise.size(); ++k) {
    parts.push_back(ad::max_rows(ad::mask_elements(enc.pointwise[k], element_masks[k])));
  }
  return ad::concat_cols(parts);
}

/// Hybrid global feature h(cat[F_self, F_other]); identity on F_self when
/// global interaction is disabled.
template <typename S>
ad::Var<S> gfi(const Bound<S>& p, ad::Var<S> f_self, ad::Var<S> f_other, Branch branch) {
  if (f_self.cols() != f_other.cols() || f_self.rows() != 1 || f_other.rows() != 1) {
    throw ShapeError("gfi: global features must be 1 x C vectors of equal width");
  }
  if (!p.config().enable_gfi) return f_self;
  if (f_self.cols() != p.config().feature_dim()) throw ShapeError("gfi: unexpected global feature width");
  return detail::mlp(p, p.model->gfi_branch(branch).gfi, ad::concat_cols<S>({f_self, f_other}));
}

template <typename S>
ad::Var<S> regress_rotation(const Bound<S>& p, ad::Var<S> hr_src, ad::Var<S> ht_src, ad::Var<S> hr_ref,
                            ad::Var<S> ht_ref) {
  ad::Var<S> raw = detail::mlp(p, p.model->rotation_head(), ad::concat_cols<S>({hr_src, ht_src, hr_ref, ht_ref}));
  return ad::normalize_quaternion(raw);
}

/// Saliency point of the `self` cloud; the translation is c_ref - c_src.
template <typename S>
ad::Var<S> regress_translation(const Bound<S>& p, ad::Var<S> hr_self, ad::Var<S> ht_self, ad::Var<S> ht_other) {
  return detail::mlp(p, p.model->translation_head(), ad::concat_cols<S>({hr_self, ht_self, ht_other}));
}

/// Everything one registration iteration produces.
template <typename S>
struct IterationForward {
  std::array<EncodedCloud<S>, 2> source;     // indexed by Branch
  std::array<EncodedCloud<S>, 2> reference;
  std::array<ad::Var<S>, 2> hybrid_source;
  std::array<ad::Var<S>, 2> hybrid_reference;
  ad::Var<S> rotation;           // 1 x 4 unit quaternion
  ad::Var<S> saliency_source;    // 1 x 3
  ad::Var<S> saliency_reference;
  ad::Var<S> translation;        // c_ref - c_src
};

template <typename S>
IterationForward<S> forward_iteration(const Bound<S>& p, ad::Var<S> source, ad::Var<S> reference) {
  IterationForward<S> f;
  for (Branch br : {Branch::Rotation, Branch::Translation}) {
    const int i = static_cast<int>(br);
    auto [xs, ys] = encode_pair(p, source, reference, br);
    detail::check_finite(xs.global, "source global feature");
    detail::check_finite(ys.global, "reference global feature");
    f.source[i] = std::move(xs);
    f.reference[i] = std::move(ys);
  }
  for (Branch br : {Branch::Rotation, Branch::Translation}) {
    const int i = static_cast<int>(br);
    f.hybrid_source[i] = gfi(p, f.source[i].global, f.reference[i].global, br);
    f.hybrid_reference[i] = gfi(p, f.reference[i].global, f.source[i].global, br);
  }
  const auto& hs = f.hybrid_source;
  const auto& hr = f.hybrid_reference;
  f.rotation = regress_rotation(p, hs[0], hs[1], hr[0], hr[1]);
  f.saliency_source = regress_translation(p, hs[0], hs[1], hr[1]);
  f.saliency_reference = regress_translation(p, hr[0], hr[1], hs[1]);
  f.translation = ad::sub(f.saliency_reference, f.saliency_source);
  detail::check_finite(f.rotation, "rotation estimate");
  detail::check_finite(f.translation, "translation estimate");
  return f;
}

template <typename S>
ad::Matrix<S> to_matrix(const PointCloud& cloud) {
  return cloud.points().template cast<S>();
}

template <typename S>
RigidTransform transform_from(const ad::Var<S>& q, const ad::Var<S>& t) {
  const auto& qv = q.value();
  const auto& tv = t.value();
  Quaternion quat{static_cast<double>(qv(0, 0)), static_cast<double>(qv(0, 1)), static_cast<double>(qv(0, 2)),
                  static_cast<double>(qv(0, 3))};
  return {quat_normalize(quat), Vec3(static_cast<double>(tv(0, 0)), static_cast<double>(tv(0, 1)),
                                     static_cast<double>(tv(0, 2)))};
}

/// Per-cloud features of one iteration in plain matrices.
struct FeatureBundle {
  std::array<std::vector<Eigen::MatrixXd>, 2> pointwise;  // [branch][block], N x C_k
  std::array<Eigen::RowVectorXd, 2> global;               // F^r, F^t
  std::array<Eigen::RowVectorXd, 2> hybrid;               // H^r, H^t
};

struct RegistrationResult {
  std::vector<RigidTransform> per_iteration;  // residual estimates in order
  RigidTransform final_transform;             // composition of per_iteration
  std::vector<Vec3> saliency_source;
  std::vector<Vec3> saliency_reference;
  std::vector<FeatureBundle> source_features;     // filled when requested
  std::vector<FeatureBundle> reference_features;
  std::vector<PointCloud> transformed_sources;    // X' at the start of each iteration
};

namespace detail {

template <typename S>
FeatureBundle bundle_from(const std::array<EncodedCloud<S>, 2>& enc, const std::array<ad::Var<S>, 2>& hybrid) {
  FeatureBundle b;
  for (int br = 0; br < 2; ++br) {
    for (const auto& f : enc[br].pointwise) b.pointwise[br].push_back(f.value().template cast<double>());
    b.global[br] = enc[br].global.value().row(0).template cast<double>();
    b.hybrid[br] = hybrid[br].value().row(0).template cast<double>();
  }
  return b;
}

}  // namespace detail

/// Iterative registration of source X onto reference Y. Each iteration
/// re-transforms X by the accumulated estimate, predicts a residual and
/// composes it on the left.
template <typename S>
RegistrationResult register_clouds(const Model<S>& model, const PointCloud& source, const PointCloud& reference,
                                   bool keep_features = false) {
  RegistrationResult result;
  RigidTransform accumulated = RigidTransform::identity();
  for (int it = 0; it < model.config().iterations; ++it) {
    ad::Tape<S> tape;
    const Bound<S> p = bind(model, tape, false);
    const PointCloud moved = apply(accumulated, source);
    ad::Var<S> x = tape.constant(to_matrix<S>(moved));
    ad::Var<S> y = tape.constant(to_matrix<S>(reference));
    IterationForward<S> f;
    try {
      f = forward_iteration(p, x, y);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError(std::string(e.what()) + " at iteration " + std::to_string(it + 1));
    }
    const RigidTransform step = transform_from(f.rotation, f.translation);
    result.per_iteration.push_back(step);
    result.saliency_source.push_back(f.saliency_source.value().row(0).template cast<double>().transpose());
    result.saliency_reference.push_back(f.saliency_reference.value().row(0).template cast<double>().transpose());
    if (keep_features) {
      result.source_features.push_back(detail::bundle_from(f.source, f.hybrid_source));
      result.reference_features.push_back(detail::bundle_from(f.reference, f.hybrid_reference));
      result.transformed_sources.push_back(moved);
    }
    accumulated = compose(step, accumulated);
  }
  result.final_transform = accumulated;
  return result;
}

/// For every global-feature channel of `branch`, the point that supplied the
/// max (lowest index on ties); returns per-point hit counts.
inline std::vector<int> contribution_map(const PointCloud& cloud, const FeatureBundle& bundle,
                                         Branch branch = Branch::Rotation) {
  const auto& blocks = bundle.pointwise[static_cast<int>(branch)];
  std::vector<int> counts(static_cast<std::size_t>(cloud.size()), 0);
  for (const auto& f : blocks) {
    if (f.rows() != cloud.size()) throw ShapeError("contribution_map: bundle does not belong to this cloud");
    for (Eigen::Index idx : ad::argmax_rows<double>(f)) ++counts[static_cast<std::size_t>(idx)];
  }
  return counts;
}

}  // namespace pcreg
