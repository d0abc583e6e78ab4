#pragma once

// Input-conditioned (selective) diagonal state-space scan.

#include "abmamba/core.hpp"

#include <string>

namespace abmamba {

// Per step k and channel c:
//   delta_k = softplus(W_delta u_k + b_delta)
//   B_k = W_B u_k + b_B,   C_k = W_C u_k + b_C
//   h_k[c,:] = exp(delta_kc * A[c,:]) * h_{k-1}[c,:] + delta_kc * B_k * u_kc
//   y_kc = <C_k, h_k[c,:]> + D_c u_kc
// with A = -exp(a_log) strictly negative.
template <typename S>
struct SelectiveSSMLayer {
  using Scalar = S;
  Mat<S> a_log;    // d x Q
  Vec<S> d_skip;   // d
  Mat<S> w_delta;  // d x d
  Vec<S> b_delta;  // d
  Mat<S> w_b;      // Q x d
  Vec<S> b_b;      // Q
  Mat<S> w_c;      // Q x d
  Vec<S> b_c;      // Q

  Index channels() const { return a_log.rows(); }
  Index state_dim() const { return a_log.cols(); }

  Mat<S> a_matrix() const { return -a_log.array().exp().matrix(); }

  template <typename F>
  void visit(F&& f, const std::string& prefix = "") {
    f(prefix + "a_log", a_log);
    f(prefix + "d_skip", d_skip);
    f(prefix + "w_delta", w_delta);
    f(prefix + "b_delta", b_delta);
    f(prefix + "w_b", w_b);
    f(prefix + "b_b", b_b);
    f(prefix + "w_c", w_c);
    f(prefix + "b_c", b_c);
  }

  static SelectiveSSMLayer zeros(Index d, Index q) {
    SelectiveSSMLayer l;
    l.a_log = Mat<S>::Zero(d, q);
    l.d_skip = Vec<S>::Zero(d);
    l.w_delta = Mat<S>::Zero(d, d);
    l.b_delta = Vec<S>::Zero(d);
    l.w_b = Mat<S>::Zero(q, d);
    l.b_b = Vec<S>::Zero(q);
    l.w_c = Mat<S>::Zero(q, d);
    l.b_c = Vec<S>::Zero(q);
    return l;
  }

  // A spans [-1, -Q] log-spaced across states; delta starts in [1e-2, 1e-1].
  static SelectiveSSMLayer init(Index d, Index q, Rng& rng) {
    auto l = zeros(d, q);
    for (Index c = 0; c < d; ++c)
      for (Index s = 0; s < q; ++s)
        l.a_log(c, s) = q > 1 ? S(std::log(double(q)) * double(s) / double(q - 1)) : S(0);
    l.d_skip.setOnes();
    const double bound = 1.0 / std::sqrt(double(d));
    fill_uniform(l.w_delta, 0.1 * bound, rng);
    fill_uniform(l.w_b, bound, rng);
    fill_uniform(l.w_c, bound, rng);
    std::uniform_real_distribution<double> log_dt(std::log(1e-2), std::log(1e-1));
    for (Index c = 0; c < d; ++c) {
      const double dt = std::exp(log_dt(rng));
      l.b_delta(c) = S(dt + std::log(-std::expm1(-dt)));  // inverse softplus
    }
    return l;
  }
};

template <typename S>
struct SelectiveTape {
  bool recorded = false;
  Mat<S> u;       // L x d
  Mat<S> z;       // pre-softplus delta, L x d
  Mat<S> delta;   // L x d
  Mat<S> b;       // L x Q
  Mat<S> c;       // L x Q
  Mat<S> states;  // (L+1) x (d*Q); row k is h_k flattened channel-major, row 0 = h_0
};

namespace detail {

template <typename S>
using StateMap = Eigen::Map<Mat<S>>;
template <typename S>
using ConstStateMap = Eigen::Map<const Mat<S>>;

// One recurrence step on a d x Q state.
template <typename S, typename HDerived>
void selective_update(const Mat<S>& a, const Eigen::Ref<const RowVec<S>>& u_row,
                      const Eigen::Ref<const RowVec<S>>& delta_row,
                      const Eigen::Ref<const RowVec<S>>& b_row,
                      const Eigen::Ref<const RowVec<S>>& c_row, Eigen::MatrixBase<HDerived>& h,
                      const Vec<S>& d_skip, Eigen::Ref<RowVec<S>> y_row) {
  const auto du = (delta_row.array() * u_row.array()).transpose().matrix();
  h.derived().array() = (a.array().colwise() * delta_row.transpose().array()).exp() * h.array() +
                        (du * b_row).array();
  y_row = (h * c_row.transpose()).transpose();
  y_row.array() += d_skip.transpose().array() * u_row.array();
}

}  // namespace detail

template <typename S>
Mat<S> selective_scan(const SelectiveSSMLayer<S>& layer, const Mat<S>& u,
                      SelectiveTape<S>* tape = nullptr) {
  const Index len = u.rows();
  const Index d = layer.channels();
  const Index q = layer.state_dim();
  require_shape(len >= 1, "selective_scan: sequence must be non-empty");
  require_shape(u.cols() == d, "selective_scan: input has " + std::to_string(u.cols()) +
                                   " channels, layer expects " + std::to_string(d));

  Mat<S> z = (u * layer.w_delta.transpose()).rowwise() + layer.b_delta.transpose();
  Mat<S> delta = z.unaryExpr([](S v) { return softplus(v); });
  Mat<S> bm = (u * layer.w_b.transpose()).rowwise() + layer.b_b.transpose();
  Mat<S> cm = (u * layer.w_c.transpose()).rowwise() + layer.b_c.transpose();
  const Mat<S> a = layer.a_matrix();

  Mat<S> y(len, d);
  Mat<S> h = Mat<S>::Zero(d, q);
  if (tape) {
    tape->states.resize(len + 1, d * q);
    tape->states.row(0).setZero();
  }
  for (Index k = 0; k < len; ++k) {
    detail::selective_update<S>(a, u.row(k), delta.row(k), bm.row(k), cm.row(k), h, layer.d_skip,
                                y.row(k));
    if (tape) tape->states.row(k + 1) = Eigen::Map<const RowVec<S>>(h.data(), d * q);
    if (!y.row(k).allFinite())
      throw NumericError("selective_scan: non-finite output at step " + std::to_string(k));
  }
  if (tape) {
    tape->recorded = true;
    tape->u = u;
    tape->z = std::move(z);
    tape->delta = std::move(delta);
    tape->b = std::move(bm);
    tape->c = std::move(cm);
  }
  return y;
}

// Accumulates parameter gradients into `grads` and returns dL/du.
template <typename S>
Mat<S> selective_scan_backward(const SelectiveSSMLayer<S>& layer, const SelectiveTape<S>& tape,
                               const NoDeduce<Mat<S>>& dy, SelectiveSSMLayer<S>& grads) {
  if (!tape.recorded) throw UsageError("selective_scan_backward: forward pass was not recorded");
  const Index len = tape.u.rows();
  const Index d = layer.channels();
  const Index q = layer.state_dim();
  require_shape(dy.rows() == len && dy.cols() == d, "selective_scan_backward: dy shape mismatch");

  const Mat<S> a = layer.a_matrix();
  Mat<S> da = Mat<S>::Zero(d, q);
  Mat<S> ddelta(len, d), db(len, q), dc(len, q);
  Mat<S> du(len, d);
  Mat<S> lam = Mat<S>::Zero(d, q);
  for (Index k = len - 1; k >= 0; --k) {
    detail::ConstStateMap<S> h_prev(tape.states.row(k).data(), d, q);
    detail::ConstStateMap<S> h(tape.states.row(k + 1).data(), d, q);
    const auto dy_k = dy.row(k).transpose();
    const auto u_k = tape.u.row(k).transpose();
    const auto delta_k = tape.delta.row(k).transpose();

    dc.row(k) = dy.row(k) * h;
    lam.noalias() += dy_k * tape.c.row(k);
    grads.d_skip.array() += dy_k.array() * u_k.array();
    du.row(k) = (dy_k.array() * layer.d_skip.array()).transpose();

    const Mat<S> abar = (a.array().colwise() * delta_k.array()).exp().matrix();
    const Mat<S> gate = (lam.array() * h_prev.array() * abar.array()).matrix();  // dL/d(delta*A)
    const Vec<S> lam_b = lam * tape.b.row(k).transpose();                        // sum_q lam B
    ddelta.row(k) = ((gate.cwiseProduct(a)).rowwise().sum().array() +
                     lam_b.array() * u_k.array())
                        .transpose();
    da.array() += gate.array().colwise() * delta_k.array();
    db.row(k) = (delta_k.array() * u_k.array()).matrix().transpose() * lam;
    du.row(k).array() += (delta_k.array() * lam_b.array()).transpose();
    lam.array() *= abar.array();
  }
  grads.a_log.array() += da.array() * a.array();

  const Mat<S> dz = ddelta.cwiseProduct(tape.z.unaryExpr([](S v) { return sigmoid(v); }));
  grads.w_delta.noalias() += dz.transpose() * tape.u;
  grads.b_delta += dz.colwise().sum().transpose();
  du.noalias() += dz * layer.w_delta;
  grads.w_b.noalias() += db.transpose() * tape.u;
  grads.b_b += db.colwise().sum().transpose();
  du.noalias() += db * layer.w_b;
  grads.w_c.noalias() += dc.transpose() * tape.u;
  grads.b_c += dc.colwise().sum().transpose();
  du.noalias() += dc * layer.w_c;
  return du;
}

// Recurrent single-token mode; the state is d x Q.
template <typename S>
struct SelectiveState {
  Mat<S> h;
  static SelectiveState zeros(const SelectiveSSMLayer<S>& l) {
    return {Mat<S>::Zero(l.channels(), l.state_dim())};
  }
  Index elements() const { return h.size(); }
};

template <typename S>
RowVec<S> selective_step(const SelectiveSSMLayer<S>& layer, const RowVec<S>& u_row,
                         SelectiveState<S>& state) {
  require_shape(u_row.size() == layer.channels(), "selective_step: channel mismatch");
  const RowVec<S> z = u_row * layer.w_delta.transpose() + layer.b_delta.transpose();
  const RowVec<S> delta = z.unaryExpr([](S v) { return softplus(v); });
  const RowVec<S> b = u_row * layer.w_b.transpose() + layer.b_b.transpose();
  const RowVec<S> c = u_row * layer.w_c.transpose() + layer.b_c.transpose();
  RowVec<S> y(layer.channels());
  detail::selective_update<S>(layer.a_matrix(), u_row, delta, b, c, state.h, layer.d_skip, y);
  return y;
}

}  // namespace abmamba
