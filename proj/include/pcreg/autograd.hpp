#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records every operation; backward() walks the records in
// reverse creation order. Nodes that do not depend on a variable carry no
// backward closure, so constant sub-graphs cost nothing in the reverse pass.

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "pcreg/errors.hpp"

namespace pcreg::ad {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
class Tape;

template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  [[nodiscard]] const Matrix<S>& value() const { return tape->value(id); }
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] S scalar() const { return value()(0, 0); }
  [[nodiscard]] bool valid() const { return tape != nullptr && id >= 0; }
};

/// Sink for non-fatal numerical diagnostics (e.g. degenerate quaternion
/// fallbacks). Defaults to stderr.
inline std::function<void(const std::string&)>& diagnostic_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::cerr << "[pcreg] " << msg << '\n';
  };
  return sink;
}

template <typename S>
class Tape {
 public:
  using Mat = Matrix<S>;
  using Backward = std::function<void(Tape&, int)>;

  Var<S> constant(Mat value) { return push(std::move(value), false, {}); }
  Var<S> variable(Mat value) { return push(std::move(value), true, {}); }
  Var<S> scalar_constant(S v) { return constant(Mat::Constant(1, 1, v)); }

  Var<S> push(Mat value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  [[nodiscard]] const Mat& value(int id) const { return nodes_[id].value; }
  [[nodiscard]] bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  [[nodiscard]] bool has_grad(int id) const { return nodes_[id].has_grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Gradient of the last backward() root w.r.t. node `id` (zeros if the
  /// node was not reached).
  [[nodiscard]] Mat grad(int id) const {
    const Node& n = nodes_[id];
    if (!n.has_grad) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  [[nodiscard]] const Mat& grad_ref(int id) const { return nodes_[id].grad; }

  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  void backward(Var<S> root) {
    if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward: root must be a 1x1 scalar");
    for (auto& n : nodes_) {
      n.has_grad = false;
      n.grad.resize(0, 0);
    }
    accumulate(root.id, Mat::Ones(1, 1));
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backward) n.backward(*this, i);
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

namespace detail {

template <typename S>
bool any_requires(const Tape<S>& t, std::initializer_list<Var<S>> vars) {
  for (const auto& v : vars) {
    if (t.requires_grad(v.id)) return true;
  }
  return false;
}

template <typename S>
void require_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace detail

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix<S> out = a.value() * b.value();
  return t.push(std::move(out), detail::any_requires(t, {a, b}), [a, b](Tape<S>& tp, int self) {
    const auto& g = tp.grad_ref(self);
    if (tp.requires_grad(a.id)) tp.accumulate(a.id, g * tp.value(b.id).transpose());
    if (tp.requires_grad(b.id)) tp.accumulate(b.id, tp.value(a.id).transpose() * g);
  });
}

/// x W + b, with b (1 x out) broadcast over rows.
template <typename S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> b) {
  Tape<S>& t = *x.tape;
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) throw ShapeError("linear: shape mismatch");
  Matrix<S> out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return t.push(std::move(out), detail::any_requires(t, {x, w, b}), [x, w, b](Tape<S>& tp, int self) {
    const auto& g = tp.grad_ref(self);
    if (tp.requires_grad(x.id)) tp.accumulate(x.id, g * tp.value(w.id).transpose());
    if (tp.requires_grad(w.id)) tp.accumulate(w.id, tp.value(x.id).transpose() * g);
    if (tp.requires_grad(b.id)) tp.accumulate(b.id, g.colwise().sum());
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::require_same_shape(a, b, "add");
  Tape<S>& t = *a.tape;
  Matrix<S> out = a.value() + b.value();
  return t.push(std::move(out), detail::any_requires(t, {a, b}), [a, b](Tape<S>& tp, int self) {
    tp.accumulate(a.id, tp.grad_ref(self));
    tp.accumulate(b.id, tp.grad_ref(self));
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::require_same_shape(a, b, "sub");
  Tape<S>& t = *a.tape;
  Matrix<S> out = a.value() - b.value();
  return t.push(std::move(out), detail::any_requires(t, {a, b}), [a, b](Tape<S>& tp, int self) {
    tp.accumulate(a.id, tp.grad_ref(self));
    tp.accumulate(b.id, -tp.grad_ref(self));
  });
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
  Tape<S>& t = *a.tape;
  Matrix<S> out = a.value() * factor;
  return t.push(std::move(out), t.requires_grad(a.id),
                [a, factor](Tape<S>& tp, int self) { tp.accumulate(a.id, tp.grad_ref(self) * factor); });
}

/// a + repeat(row, a.rows()).
template <typename S>
Var<S> add_row(Var<S> a, Var<S> row) {
  Tape<S>& t = *a.tape;
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row vector width mismatch");
  Matrix<S> out = a.value();
  out.rowwise() += row.value().row(0);
  return t.push(std::move(out), detail::any_requires(t, {a, row}), [a, row](Tape<S>& tp, int self) {
    tp.accumulate(a.id, tp.grad_ref(self));
    if (tp.requires_grad(row.id)) tp.accumulate(row.id, tp.grad_ref(self).colwise().sum());
  });
}

/// log(1 + exp(x)), strictly positive.
template <typename S>
Var<S> softplus(Var<S> x) {
  Tape<S>& t = *x.tape;
  const auto xa = x.value().array();
  Matrix<S> out = (xa.max(S(0)) + (-xa.abs()).exp().log1p()).matrix();
  return t.push(std::move(out), t.requires_grad(x.id), [x](Tape<S>& tp, int self) {
    const auto sig = (S(1) / (S(1) + (-tp.value(x.id).array()).exp())).matrix();
    tp.accumulate(x.id, tp.grad_ref(self).cwiseProduct(sig));
  });
}

/// Normalizes every row over its columns, then applies per-column gain and
/// bias. Rows never exchange information.
template <typename S>
Var<S> layer_norm_rows(Var<S> x, Var<S> gain, Var<S> bias, S eps = S(1e-5)) {
  Tape<S>& t = *x.tape;
  const Eigen::Index c = x.cols();
  if (gain.cols() != c || bias.cols() != c || gain.rows() != 1 || bias.rows() != 1) {
    throw ShapeError("layer_norm_rows: gain/bias width mismatch");
  }
  const Matrix<S>& xv = x.value();
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(xv.rows());
  Matrix<S> xhat(xv.rows(), c);
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const S mean = xv.row(i).mean();
    const S var = (xv.row(i).array() - mean).square().mean();
    inv_std[i] = S(1) / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mean) * inv_std[i];
  }
  Matrix<S> out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return t.push(std::move(out), detail::any_requires(t, {x, gain, bias}),
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<S>& tp, int self) {
                  const auto& g = tp.grad_ref(self);
                  if (tp.requires_grad(gain.id)) tp.accumulate(gain.id, g.cwiseProduct(xhat).colwise().sum());
                  if (tp.requires_grad(bias.id)) tp.accumulate(bias.id, g.colwise().sum());
                  if (tp.requires_grad(x.id)) {
                    Matrix<S> gx = g.array().rowwise() * tp.value(gain.id).row(0).array();
                    for (Eigen::Index i = 0; i < gx.rows(); ++i) {
                      const S m1 = gx.row(i).mean();
                      const S m2 = gx.row(i).cwiseProduct(xhat.row(i)).mean();
                      gx.row(i) = ((gx.row(i).array() - m1 - xhat.row(i).array() * m2) * inv_std[i]).matrix();
                    }
                    tp.accumulate(x.id, gx);
                  }
                });
}

/// Channel-wise max over rows: (N x C) -> (1 x C). Ties resolve to the
/// lowest row index.
template <typename S>
std::vector<Eigen::Index> argmax_rows(const Matrix<S>& x) {
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(x.cols()), 0);
  for (Eigen::Index r = 1; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (x(r, c) > x(arg[c], c)) arg[c] = r;
    }
  }
  return arg;
}

template <typename S>
Var<S> max_rows(Var<S> x) {
  Tape<S>& t = *x.tape;
  if (x.rows() < 1) throw ShapeError("max_rows: empty input");
  const Matrix<S>& xv = x.value();
  std::vector<Eigen::Index> arg = argmax_rows<S>(xv);
  Matrix<S> out(1, xv.cols());
  for (Eigen::Index c = 0; c < xv.cols(); ++c) out(0, c) = xv(arg[c], c);
  return t.push(std::move(out), t.requires_grad(x.id), [x, arg = std::move(arg)](Tape<S>& tp, int self) {
    const auto& g = tp.grad_ref(self);
    Matrix<S> gx = Matrix<S>::Zero(tp.value(x.id).rows(), tp.value(x.id).cols());
    for (Eigen::Index c = 0; c < gx.cols(); ++c) gx(arg[c], c) = g(0, c);
    tp.accumulate(x.id, gx);
  });
}

/// Multiplies row i by the constant mask[i].
template <typename S>
Var<S> scale_rows(Var<S> x, const Eigen::Matrix<S, Eigen::Dynamic, 1>& mask) {
  Tape<S>& t = *x.tape;
  if (mask.size() != x.rows()) throw ShapeError("scale_rows: mask length mismatch");
  Matrix<S> out = x.value().array().colwise() * mask.array();
  return t.push(std::move(out), t.requires_grad(x.id), [x, mask](Tape<S>& tp, int self) {
    tp.accumulate(x.id, (tp.grad_ref(self).array().colwise() * mask.array()).matrix());
  });
}

/// Elementwise product with a constant matrix of the same shape.
template <typename S>
Var<S> mask_elements(Var<S> x, const Matrix<S>& mask) {
  Tape<S>& t = *x.tape;
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) throw ShapeError("mask_elements: shape mismatch");
  Matrix<S> out = x.value().cwiseProduct(mask);
  return t.push(std::move(out), t.requires_grad(x.id), [x, mask](Tape<S>& tp, int self) {
    tp.accumulate(x.id, tp.grad_ref(self).cwiseProduct(mask));
  });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  Tape<S>& t = *parts.front().tape;
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool req = false;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
    req = req || t.requires_grad(p.id);
  }
  Matrix<S> out(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return t.push(std::move(out), req, [parts](Tape<S>& tp, int self) {
    const auto& g = tp.grad_ref(self);
    Eigen::Index o = 0;
    for (const auto& p : parts) {
      const Eigen::Index w = tp.value(p.id).cols();
      if (tp.requires_grad(p.id)) tp.accumulate(p.id, g.middleCols(o, w));
      o += w;
    }
  });
}

/// Frobenius norm as a 1x1 value. The subgradient at zero is taken as zero.
template <typename S>
Var<S> l2_norm(Var<S> a) {
  Tape<S>& t = *a.tape;
  const S n = a.value().norm();
  return t.push(Matrix<S>::Constant(1, 1, n), t.requires_grad(a.id), [a, n](Tape<S>& tp, int self) {
    if (n > S(0)) tp.accumulate(a.id, tp.value(a.id) * (tp.grad_ref(self)(0, 0) / n));
  });
}

/// Sum of absolute values as a 1x1 value.
template <typename S>
Var<S> l1_norm(Var<S> a) {
  Tape<S>& t = *a.tape;
  const S n = a.value().cwiseAbs().sum();
  return t.push(Matrix<S>::Constant(1, 1, n), t.requires_grad(a.id), [a](Tape<S>& tp, int self) {
    const S g = tp.grad_ref(self)(0, 0);
    tp.accumulate(a.id, (tp.value(a.id).array().sign() * g).matrix());
  });
}

/// max(a, b) of two 1x1 values; ties route the gradient to a.
template <typename S>
Var<S> maximum(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  if (a.rows() != 1 || a.cols() != 1 || b.rows() != 1 || b.cols() != 1) throw ShapeError("maximum: scalars only");
  const bool take_a = a.scalar() >= b.scalar();
  const S v = take_a ? a.scalar() : b.scalar();
  return t.push(Matrix<S>::Constant(1, 1, v), detail::any_requires(t, {a, b}), [a, b, take_a](Tape<S>& tp, int self) {
    tp.accumulate(take_a ? a.id : b.id, tp.grad_ref(self));
  });
}

template <typename S>
Var<S> add_n(const std::vector<Var<S>>& terms) {
  if (terms.empty()) throw ShapeError("add_n: no terms");
  Var<S> acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

template <typename S>
Var<S> mean_n(const std::vector<Var<S>>& terms) {
  return scale(add_n(terms), S(1) / static_cast<S>(terms.size()));
}

/// Maps a raw 1x4 vector to a unit quaternion on the w >= 0 hemisphere. A
/// vanishing input falls back to the identity and reports a diagnostic.
template <typename S>
Var<S> normalize_quaternion(Var<S> raw) {
  Tape<S>& t = *raw.tape;
  if (raw.rows() != 1 || raw.cols() != 4) throw ShapeError("normalize_quaternion: expected 1x4 input");
  const S n = raw.value().norm();
  if (!(n > S(1e-12)) || !std::isfinite(static_cast<double>(n))) {
    diagnostic_sink()("rotation head produced a degenerate quaternion; using identity");
    Matrix<S> id = Matrix<S>::Zero(1, 4);
    id(0, 0) = S(1);
    return t.constant(std::move(id));
  }
  const S sign = raw.value()(0, 0) >= S(0) ? S(1) : S(-1);
  Matrix<S> u = raw.value() / n;
  Matrix<S> out = u * sign;
  return t.push(std::move(out), t.requires_grad(raw.id), [raw, n, sign, u](Tape<S>& tp, int self) {
    const auto& g = tp.grad_ref(self);
    const S proj = g.cwiseProduct(u).sum();
    tp.accumulate(raw.id, ((g - u * proj) * (sign / n)).eval());
  });
}

namespace detail {

template <typename S>
using Mat3 = Eigen::Matrix<S, 3, 3, Eigen::RowMajor>;

template <typename S>
Mat3<S> rotation_from_quaternion(S w, S x, S y, S z) {
  Mat3<S> r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),  //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

/// Partial derivatives of the polynomial rotation map w.r.t. (w, x, y, z).
template <typename S>
std::array<Mat3<S>, 4> rotation_jacobian(S w, S x, S y, S z) {
  std::array<Mat3<S>, 4> d;
  d[0] << 0, -2 * z, 2 * y,  //
      2 * z, 0, -2 * x,       //
      -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z,  //
      2 * y, -4 * x, -2 * w,  //
      2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w,  //
      2 * x, 0, 2 * z,            //
      -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x,  //
      2 * w, -4 * z, 2 * y,        //
      2 * x, 2 * y, 0;
  return d;
}

}  // namespace detail

/// Hamilton product of two 1x4 quaternions.
template <typename S>
Var<S> quaternion_multiply(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  if (a.cols() != 4 || b.cols() != 4 || a.rows() != 1 || b.rows() != 1) throw ShapeError("quaternion_multiply: 1x4");
  auto left = [](const Matrix<S>& q) {
    Eigen::Matrix<S, 4, 4> m;
    const S w = q(0, 0), x = q(0, 1), y = q(0, 2), z = q(0, 3);
    m << w, -x, -y, -z, x, w, -z, y, y, z, w, -x, z, -y, x, w;
    return m;
  };
  auto right = [](const Matrix<S>& q) {
    Eigen::Matrix<S, 4, 4> m;
    const S w = q(0, 0), x = q(0, 1), y = q(0, 2), z = q(0, 3);
    m << w, -x, -y, -z, x, w, z, -y, y, -z, w, x, z, y, -x, w;
    return m;
  };
  const Eigen::Matrix<S, 4, 4> la = left(a.value());
  const Eigen::Matrix<S, 4, 4> rb = right(b.value());
  Matrix<S> out = (la * b.value().transpose()).transpose();
  return t.push(std::move(out), detail::any_requires(t, {a, b}), [a, b, la, rb](Tape<S>& tp, int self) {
    const auto& g = tp.grad_ref(self);
    if (tp.requires_grad(a.id)) tp.accumulate(a.id, (rb.transpose() * g.transpose()).transpose());
    if (tp.requires_grad(b.id)) tp.accumulate(b.id, (la.transpose() * g.transpose()).transpose());
  });
}

/// Applies rotation q (1x4, treated as unit) and translation t (1x3) to
/// every row of p (N x 3): p R^T + t.
template <typename S>
Var<S> transform_points(Var<S> p, Var<S> q, Var<S> trans) {
  Tape<S>& t = *p.tape;
  if (p.cols() != 3 || q.rows() != 1 || q.cols() != 4 || trans.rows() != 1 || trans.cols() != 3) {
    throw ShapeError("transform_points: expected N x 3 points, 1 x 4 rotation, 1 x 3 translation");
  }
  const auto& qv = q.value();
  const detail::Mat3<S> r = detail::rotation_from_quaternion<S>(qv(0, 0), qv(0, 1), qv(0, 2), qv(0, 3));
  Matrix<S> out = p.value() * r.transpose();
  out.rowwise() += trans.value().row(0);
  return t.push(std::move(out), detail::any_requires(t, {p, q, trans}), [p, q, trans, r](Tape<S>& tp, int self) {
    const auto& g = tp.grad_ref(self);
    if (tp.requires_grad(p.id)) tp.accumulate(p.id, g * r);
    if (tp.requires_grad(trans.id)) tp.accumulate(trans.id, g.colwise().sum());
    if (tp.requires_grad(q.id)) {
      const detail::Mat3<S> gr = g.transpose() * tp.value(p.id);
      const auto& qv2 = tp.value(q.id);
      const auto d = detail::rotation_jacobian<S>(qv2(0, 0), qv2(0, 1), qv2(0, 2), qv2(0, 3));
      Matrix<S> gq(1, 4);
      for (int c = 0; c < 4; ++c) gq(0, c) = gr.cwiseProduct(d[c]).sum();
      tp.accumulate(q.id, gq);
    }
  });
}

template <typename S>
Var<S> detach(Var<S> a) {
  return a.tape->constant(a.value());
}

}  // namespace pcreg::ad
