#pragma once

// Single-head causal softmax attention, the quadratic baseline for the
// throughput and memory benchmarks.

#include "abmamba/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace abmamba {

template <typename S>
struct AttentionParams {
  using Scalar = S;
  Mat<S> wq, wk, wv, wo;  // d x d each

  Index width() const { return wq.rows(); }

  template <typename F>
  void visit(F&& f, const std::string& prefix = "") {
    f(prefix + "wq", wq);
    f(prefix + "wk", wk);
    f(prefix + "wv", wv);
    f(prefix + "wo", wo);
  }

  static AttentionParams init(Index d, Rng& rng) {
    AttentionParams p;
    for (Mat<S>* m : {&p.wq, &p.wk, &p.wv, &p.wo}) {
      m->resize(d, d);
      fill_uniform(*m, 1.0 / std::sqrt(double(d)), rng);
    }
    return p;
  }
};

namespace detail {

// Softmax over the first `valid` entries of each row; the rest are zeroed.
template <typename Derived>
void causal_softmax_rows(Eigen::MatrixBase<Derived>& scores, Index first_query) {
  using S = typename Derived::Scalar;
  for (Index r = 0; r < scores.rows(); ++r) {
    const Index valid = first_query + r + 1;
    auto row = scores.row(r).head(valid);
    const S mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    row /= row.sum();
    scores.row(r).tail(scores.cols() - valid).setZero();
  }
}

}  // namespace detail

// Full L x L masked scores, computed in query row blocks to bound memory.
template <typename S>
Mat<S> attention_forward(const Mat<S>& x, const AttentionParams<S>& p, Index block = 256) {
  require_shape(x.cols() == p.width(), "attention_forward: input width " + std::to_string(x.cols()) +
                                           " does not match " + std::to_string(p.width()));
  const Index len = x.rows();
  const S scale = S(1) / std::sqrt(S(p.width()));
  const Mat<S> q = x * p.wq.transpose() * scale;
  const Mat<S> k = x * p.wk.transpose();
  const Mat<S> v = x * p.wv.transpose();
  Mat<S> ctx(len, p.width());
  for (Index lo = 0; lo < len; lo += block) {
    const Index rows = std::min(block, len - lo);
    Mat<S> scores = q.middleRows(lo, rows) * k.transpose();
    detail::causal_softmax_rows(scores, lo);
    ctx.middleRows(lo, rows).noalias() = scores * v;
  }
  return ctx * p.wo.transpose();
}

// Key/value cache with amortised growth; `elements()` counts live entries.
template <typename S>
struct KvCache {
  Mat<S> k, v;
  Index len = 0;

  Index elements() const { return len * (k.cols() + v.cols()); }

  void append(const RowVec<S>& kr, const RowVec<S>& vr) {
    if (len == k.rows()) {
      const Index cap = std::max<Index>(16, 2 * k.rows());
      k.conservativeResize(cap, kr.size());
      v.conservativeResize(cap, vr.size());
    }
    k.row(len) = kr;
    v.row(len) = vr;
    ++len;
  }
};

template <typename S>
KvCache<S> kv_cache_from(const Mat<S>& x, const AttentionParams<S>& p) {
  KvCache<S> c;
  c.k = x * p.wk.transpose();
  c.v = x * p.wv.transpose();
  c.len = x.rows();
  return c;
}

template <typename S>
RowVec<S> attention_step(const RowVec<S>& x, const AttentionParams<S>& p, KvCache<S>& cache) {
  const S scale = S(1) / std::sqrt(S(p.width()));
  const RowVec<S> q = x * p.wq.transpose() * scale;
  cache.append(x * p.wk.transpose(), x * p.wv.transpose());
  const Index n = cache.len;
  RowVec<S> w = q * cache.k.topRows(n).transpose();
  w = (w.array() - w.maxCoeff()).exp().matrix();
  w /= w.sum();
  return (w * cache.v.topRows(n)) * p.wo.transpose();
}

}  // namespace abmamba
