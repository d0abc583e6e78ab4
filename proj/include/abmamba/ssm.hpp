#pragma once

// Linear time-invariant state-space kernels: zero-order-hold discretization,
// the recurrent scan, the equivalent causal convolution, and their adjoints.

#include "abmamba/core.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <sstream>

namespace abmamba {

// dh/dt = A h + B x,  y = C h + D x.  A is either a dense Q x Q matrix or a
// diagonal held as a Q-vector; the diagonal form never builds the full matrix.
template <typename S>
struct ContinuousSSM {
  using Scalar = S;
  bool diagonal = true;
  Vec<S> a_diag;
  Mat<S> a_dense;
  Vec<S> b;
  Vec<S> c;
  S d = S(0);

  Index state_dim() const { return diagonal ? a_diag.size() : a_dense.rows(); }

  static ContinuousSSM make_diagonal(Vec<S> a, Vec<S> b, Vec<S> c, S d) {
    ContinuousSSM m;
    m.diagonal = true;
    m.a_diag = std::move(a);
    m.b = std::move(b);
    m.c = std::move(c);
    m.d = d;
    m.validate();
    return m;
  }

  static ContinuousSSM make_dense(Mat<S> a, Vec<S> b, Vec<S> c, S d) {
    ContinuousSSM m;
    m.diagonal = false;
    m.a_dense = std::move(a);
    m.b = std::move(b);
    m.c = std::move(c);
    m.d = d;
    m.validate();
    return m;
  }

  void validate() const {
    const Index q = state_dim();
    require_shape(q >= 1, "ContinuousSSM: state dimension must be >= 1");
    if (!diagonal) require_shape(a_dense.cols() == q, "ContinuousSSM: A must be square");
    require_shape(b.size() == q && c.size() == q, "ContinuousSSM: B and C must have Q entries");
    const bool finite = (diagonal ? a_diag.allFinite() : a_dense.allFinite()) && b.allFinite() &&
                        c.allFinite() && std::isfinite(d);
    if (!finite) throw NumericError("ContinuousSSM: non-finite parameter");
  }
};

template <typename S>
struct DiscreteSSM {
  using Scalar = S;
  bool diagonal = true;
  Vec<S> a_bar_diag;
  Mat<S> a_bar_dense;
  Vec<S> b_bar;
  Vec<S> c;
  S d = S(0);
  S delta = S(0);

  Index state_dim() const { return diagonal ? a_bar_diag.size() : a_bar_dense.rows(); }

  Vec<S> apply_a(const Vec<S>& h) const {
    if (diagonal) return a_bar_diag.cwiseProduct(h);
    return a_bar_dense * h;
  }

  Vec<S> apply_a_transpose(const Vec<S>& h) const {
    if (diagonal) return a_bar_diag.cwiseProduct(h);
    return a_bar_dense.transpose() * h;
  }
};

// Gradient of a scalar loss with respect to the fields of a DiscreteSSM.
template <typename S>
struct DiscreteSSMGrad {
  Vec<S> a_bar_diag;
  Mat<S> a_bar_dense;
  Vec<S> b_bar;
  Vec<S> c;
  S d = S(0);

  static DiscreteSSMGrad zeros_for(const DiscreteSSM<S>& m) {
    DiscreteSSMGrad g;
    const Index q = m.state_dim();
    if (m.diagonal)
      g.a_bar_diag = Vec<S>::Zero(q);
    else
      g.a_bar_dense = Mat<S>::Zero(q, q);
    g.b_bar = Vec<S>::Zero(q);
    g.c = Vec<S>::Zero(q);
    return g;
  }
};

template <typename S>
struct ContinuousSSMGrad {
  Vec<S> a_diag;
  Vec<S> b;
  Vec<S> c;
  S d = S(0);
  S delta = S(0);
};

namespace detail {

// Threshold on |delta * a| below which (exp(delta a) - 1) / a is replaced by
// its series limit.
inline constexpr double kZohSeriesThreshold = 1e-8;

template <typename S>
std::string describe(S v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

template <typename S>
DiscreteSSM<S> discretize_zoh(const ContinuousSSM<S>& cont, NoDeduce<S> delta) {
  if (!(delta > S(0)) || !std::isfinite(delta))
    throw InputError("discretize_zoh: delta must be a positive finite number");
  cont.validate();
  DiscreteSSM<S> out;
  out.diagonal = cont.diagonal;
  out.c = cont.c;
  out.d = cont.d;
  out.delta = delta;
  const Index q = cont.state_dim();

  if (cont.diagonal) {
    out.a_bar_diag.resize(q);
    out.b_bar.resize(q);
    for (Index i = 0; i < q; ++i) {
      const S a = cont.a_diag(i);
      const S z = delta * a;
      const S e = std::exp(z);
      if (!std::isfinite(e))
        throw NumericError("discretize_zoh: exp(delta * a) overflows for eigenvalue a = " +
                           detail::describe(a));
      out.a_bar_diag(i) = e;
      const S phi = std::abs(z) < S(detail::kZohSeriesThreshold) ? delta : std::expm1(z) / a;
      out.b_bar(i) = phi * cont.b(i);
    }
    return out;
  }

  // exp([[dA, dB], [0, 0]]) = [[exp(dA), (dA)^-1 (exp(dA) - I) dB], [0, 1]],
  // which stays well defined when A is singular.
  Mat<S> aug = Mat<S>::Zero(q + 1, q + 1);
  aug.topLeftCorner(q, q) = delta * cont.a_dense;
  aug.topRightCorner(q, 1) = delta * cont.b;
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> expo = aug.exp();
  if (!expo.allFinite()) {
    Eigen::EigenSolver<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>> es(cont.a_dense, false);
    Index worst = 0;
    for (Index i = 1; i < q; ++i)
      if (es.eigenvalues()(i).real() > es.eigenvalues()(worst).real()) worst = i;
    std::ostringstream os;
    os.precision(17);
    os << "discretize_zoh: matrix exponential overflows; offending eigenvalue "
       << es.eigenvalues()(worst);
    throw NumericError(os.str());
  }
  out.a_bar_dense = expo.topLeftCorner(q, q);
  out.b_bar = expo.topRightCorner(q, 1);
  return out;
}

// Adjoint of the diagonal discretization. Dense discretization exists only as
// an oracle path and has no adjoint.
template <typename S>
ContinuousSSMGrad<S> discretize_zoh_backward(const ContinuousSSM<S>& cont, NoDeduce<S> delta,
                                             const DiscreteSSMGrad<S>& g) {
  if (!cont.diagonal) throw UsageError("discretize_zoh_backward: only diagonal A has an adjoint");
  const Index q = cont.state_dim();
  ContinuousSSMGrad<S> out;
  out.a_diag = Vec<S>::Zero(q);
  out.b = Vec<S>::Zero(q);
  out.c = g.c;
  out.d = g.d;
  for (Index i = 0; i < q; ++i) {
    const S a = cont.a_diag(i);
    const S z = delta * a;
    const S e = std::exp(z);
    S phi, dphi_da, dphi_ddelta;
    if (std::abs(z) < S(detail::kZohSeriesThreshold)) {
      phi = delta;
      dphi_da = delta * delta / S(2);
      dphi_ddelta = S(1);
    } else {
      phi = std::expm1(z) / a;
      dphi_da = (delta * e - phi) / a;
      dphi_ddelta = e;
    }
    const S ga = g.a_bar_diag(i);
    const S gb = g.b_bar(i);
    out.a_diag(i) = ga * delta * e + gb * cont.b(i) * dphi_da;
    out.b(i) = gb * phi;
    out.delta += ga * a * e + gb * cont.b(i) * dphi_ddelta;
  }
  return out;
}

template <typename S>
struct ScanResult {
  Vec<S> y;
  Vec<S> h_final;
};

// Values kept by a recorded scan for its adjoint.
template <typename S>
struct ScanTape {
  bool recorded = false;
  Vec<S> x;
  Mat<S> states;  // row k holds h_{k-1}; row 0 is h0
};

template <typename S>
ScanResult<S> scan_recurrent(const DiscreteSSM<S>& disc, const NoDeduce<Vec<S>>& x,
                             const NoDeduce<Vec<S>>& h0,
                             ScanTape<S>* tape = nullptr) {
  const Index q = disc.state_dim();
  const Index len = x.size();
  require_shape(len >= 1, "scan_recurrent: sequence must be non-empty");
  require_shape(h0.size() == q, "scan_recurrent: h0 has " + std::to_string(h0.size()) +
                                    " entries but the state dimension is " + std::to_string(q));
  if (tape) {
    tape->recorded = true;
    tape->x = x;
    tape->states.resize(len, q);
  }
  ScanResult<S> r;
  r.y.resize(len);
  Vec<S> h = h0;
  for (Index k = 0; k < len; ++k) {
    if (tape) tape->states.row(k) = h.transpose();
    h = disc.apply_a(h) + disc.b_bar * x(k);
    r.y(k) = disc.c.dot(h) + disc.d * x(k);
  }
  r.h_final = std::move(h);
  return r;
}

template <typename S>
struct ScanGrad {
  DiscreteSSMGrad<S> params;
  Vec<S> x;
  Vec<S> h0;
};

// dy: upstream adjoint of y; dh_final: upstream adjoint of the final state
// (empty means zero).
template <typename S>
ScanGrad<S> scan_recurrent_backward(const DiscreteSSM<S>& disc, const ScanTape<S>& tape,
                                    const NoDeduce<Vec<S>>& dy,
                                    const NoDeduce<Vec<S>>& dh_final = Vec<S>()) {
  if (!tape.recorded) throw UsageError("scan_recurrent_backward: forward pass was not recorded");
  const Index q = disc.state_dim();
  const Index len = tape.x.size();
  require_shape(dy.size() == len, "scan_recurrent_backward: dy length mismatch");
  ScanGrad<S> g;
  g.params = DiscreteSSMGrad<S>::zeros_for(disc);
  g.x = Vec<S>::Zero(len);
  Vec<S> lam = dh_final.size() == 0 ? Vec<S>::Zero(q) : dh_final;
  for (Index k = len - 1; k >= 0; --k) {
    const Vec<S> h_prev = tape.states.row(k).transpose();
    const Vec<S> h = disc.apply_a(h_prev) + disc.b_bar * tape.x(k);
    g.params.c += dy(k) * h;
    g.params.d += dy(k) * tape.x(k);
    lam += dy(k) * disc.c;
    g.x(k) = dy(k) * disc.d + disc.b_bar.dot(lam);
    g.params.b_bar += lam * tape.x(k);
    if (disc.diagonal)
      g.params.a_bar_diag += lam.cwiseProduct(h_prev);
    else
      g.params.a_bar_dense += lam * h_prev.transpose();
    lam = disc.apply_a_transpose(lam);
  }
  g.h0 = lam;
  return g;
}

// Taps C A_bar^(k-1) B_bar, k = 1..L. The feedthrough D is not folded into the
// taps; conv_apply adds D x once.
template <typename S>
Vec<S> ssm_kernel(const DiscreteSSM<S>& disc, Index length) {
  require_shape(length >= 1, "ssm_kernel: length must be >= 1");
  Vec<S> k(length);
  Vec<S> v = disc.b_bar;
  for (Index i = 0; i < length; ++i) {
    k(i) = disc.c.dot(v);
    if (!std::isfinite(k(i)))
      throw NumericError("ssm_kernel: non-finite tap at index " + std::to_string(i));
    v = disc.apply_a(v);
  }
  return k;
}

template <typename S>
DiscreteSSMGrad<S> ssm_kernel_backward(const DiscreteSSM<S>& disc, const NoDeduce<Vec<S>>& dkernel) {
  const Index len = dkernel.size();
  const Index q = disc.state_dim();
  auto g = DiscreteSSMGrad<S>::zeros_for(disc);
  // v_i = A^i B, w_i = (A^T)^i C.  dK_i/dA = sum_{j<i} (A^T)^j C (A^(i-1-j) B)^T.
  std::vector<Vec<S>> v(len), w(len);
  v[0] = disc.b_bar;
  w[0] = disc.c;
  for (Index i = 1; i < len; ++i) {
    v[i] = disc.apply_a(v[i - 1]);
    w[i] = disc.apply_a_transpose(w[i - 1]);
  }
  // Suffix accumulation: r_j = sum_{i>j} dK_i v_{i-1-j}.
  for (Index i = 0; i < len; ++i) {
    g.c += dkernel(i) * v[i];
    g.b_bar += dkernel(i) * w[i];
  }
  for (Index j = 0; j + 1 < len; ++j) {
    Vec<S> r = Vec<S>::Zero(q);
    for (Index i = j + 1; i < len; ++i) r += dkernel(i) * v[i - 1 - j];
    if (disc.diagonal)
      g.a_bar_diag += w[j].cwiseProduct(r);
    else
      g.a_bar_dense += w[j] * r.transpose();
  }
  return g;
}

// y_k = sum_{j<=k} kernel_j x_{k-j} + D x_k  (0-based).
template <typename S>
Vec<S> conv_apply(const Vec<S>& kernel, const NoDeduce<Vec<S>>& x, NoDeduce<S> d) {
  require_shape(kernel.size() == x.size(), "conv_apply: kernel has " +
                                               std::to_string(kernel.size()) + " taps but x has " +
                                               std::to_string(x.size()) + " samples");
  const Index len = x.size();
  Vec<S> y(len);
  for (Index k = 0; k < len; ++k) {
    S acc = d * x(k);
    for (Index j = 0; j <= k; ++j) acc += kernel(j) * x(k - j);
    y(k) = acc;
  }
  return y;
}

template <typename S>
struct ConvGrad {
  Vec<S> kernel;
  Vec<S> x;
  S d = S(0);
};

template <typename S>
ConvGrad<S> conv_apply_backward(const Vec<S>& kernel, const NoDeduce<Vec<S>>& x, NoDeduce<S> d,
                                const NoDeduce<Vec<S>>& dy) {
  require_shape(kernel.size() == x.size() && dy.size() == x.size(),
                "conv_apply_backward: length mismatch");
  const Index len = x.size();
  ConvGrad<S> g;
  g.kernel = Vec<S>::Zero(len);
  g.x = Vec<S>::Zero(len);
  for (Index k = 0; k < len; ++k) {
    g.d += dy(k) * x(k);
    g.x(k) += dy(k) * d;
    for (Index j = 0; j <= k; ++j) {
      g.kernel(j) += dy(k) * x(k - j);
      g.x(k - j) += dy(k) * kernel(j);
    }
  }
  return g;
}

}  // namespace abmamba
