#pragma once

// Selective-SSM language model: gated Mamba blocks with RMS pre-norm, a tied
// embedding head, teacher-forced cross-entropy, and recurrent greedy decoding.

#include "abmamba/core.hpp"
#include "abmamba/selective.hpp"

#include <string>
#include <vector>

namespace abmamba {

inline constexpr double kRmsEps = 1e-6;

template <typename S>
struct RmsTape {
  Mat<S> x;
  Vec<S> inv_rms;  // per row
};

template <typename S>
Mat<S> rms_norm(const Mat<S>& x, const NoDeduce<Vec<S>>& gain, RmsTape<S>* tape = nullptr) {
  Vec<S> inv = ((x.array().square().rowwise().sum() / S(x.cols())) + S(kRmsEps)).rsqrt().matrix();
  Mat<S> out = (x.array().colwise() * inv.array()).rowwise() * gain.transpose().array();
  if (tape) {
    tape->x = x;
    tape->inv_rms = std::move(inv);
  }
  return out;
}

template <typename S>
Mat<S> rms_norm_backward(const RmsTape<S>& tape, const Vec<S>& gain, const NoDeduce<Mat<S>>& dout,
                         Vec<S>& dgain) {
  const Mat<S> n = tape.x.array().colwise() * tape.inv_rms.array();
  dgain += (dout.array() * n.array()).colwise().sum().transpose().matrix();
  const Mat<S> dn = dout.array().rowwise() * gain.transpose().array();
  const Vec<S> proj = (dn.array() * n.array()).rowwise().sum() / S(n.cols());
  return ((dn.array() - n.array().colwise() * proj.array()).colwise() * tape.inv_rms.array()).matrix();
}

struct ModelConfig {
  Index vocab = 32;
  Index d = 64;
  Index layers = 2;
  Index expand = 2;
  Index conv_width = 4;
  Index state_dim = 16;

  Index inner() const { return expand * d; }

  void validate() const {
    if (vocab < 1) throw ConfigError("model vocabulary must be non-empty");
    if (d < 1) throw ConfigError("model.d must be >= 1");
    if (layers < 1) throw ConfigError("model.layers must be >= 1");
    if (expand < 1) throw ConfigError("model.expand must be >= 1");
    if (conv_width < 1) throw ConfigError("model.conv_width must be >= 1");
    if (state_dim < 1) throw ConfigError("model.state_dim must be >= 1");
  }

  // Carried decode state: per layer, a conv window of conv_width stream values
  // plus the d_inner x Q scan state.
  Index decode_state_elements() const { return layers * inner() * (state_dim + conv_width); }
};

template <typename S>
struct MambaBlockParams {
  using Scalar = S;
  Vec<S> norm;     // d
  Mat<S> w_in;     // 2E*d x d; rows [0, E*d) feed the stream, the rest the gate
  Mat<S> conv_w;   // E*d x k; column k-1 multiplies the current step
  Vec<S> conv_b;   // E*d
  SelectiveSSMLayer<S> ssm;
  Mat<S> w_out;    // d x E*d

  Index width() const { return norm.size(); }
  Index inner() const { return conv_w.rows(); }
  Index conv_width() const { return conv_w.cols(); }

  template <typename F>
  void visit(F&& f, const std::string& prefix = "") {
    f(prefix + "norm", norm);
    f(prefix + "w_in", w_in);
    f(prefix + "conv_w", conv_w);
    f(prefix + "conv_b", conv_b);
    ssm.visit(f, prefix + "ssm.");
    f(prefix + "w_out", w_out);
  }

  static MambaBlockParams init(const ModelConfig& cfg, Rng& rng) {
    MambaBlockParams p;
    const Index d = cfg.d, e = cfg.inner();
    p.norm = Vec<S>::Ones(d);
    p.w_in.resize(2 * e, d);
    fill_uniform(p.w_in, 1.0 / std::sqrt(double(d)), rng);
    p.conv_w.resize(e, cfg.conv_width);
    fill_uniform(p.conv_w, 1.0 / std::sqrt(double(cfg.conv_width)), rng);
    p.conv_b = Vec<S>::Zero(e);
    p.ssm = SelectiveSSMLayer<S>::init(e, cfg.state_dim, rng);
    p.w_out.resize(d, e);
    fill_uniform(p.w_out, 1.0 / std::sqrt(double(e)) / std::sqrt(2.0 * double(cfg.layers)), rng);
    return p;
  }
};

template <typename S>
struct MambaBlockTape {
  bool recorded = false;
  RmsTape<S> norm;
  Mat<S> normed;
  Mat<S> stream;
  Mat<S> gate;
  Mat<S> conv;  // pre-activation conv output
  Mat<S> act;   // silu(conv), the scan input
  SelectiveTape<S> scan;
  Mat<S> scan_out;
  Mat<S> gated;
};

namespace detail {

template <typename S>
Mat<S> causal_depthwise_conv(const Mat<S>& x, const Mat<S>& w, const Vec<S>& b) {
  const Index len = x.rows(), k = w.cols();
  Mat<S> out = Mat<S>::Zero(len, x.cols());
  out.rowwise() = b.transpose();
  for (Index t = 0; t < len; ++t)
    for (Index i = 0; i < k; ++i) {
      const Index src = t - (k - 1) + i;
      if (src >= 0) out.row(t).array() += w.col(i).transpose().array() * x.row(src).array();
    }
  return out;
}

}  // namespace detail

template <typename S>
Mat<S> mamba_block(const Mat<S>& x, const MambaBlockParams<S>& p, MambaBlockTape<S>* tape = nullptr) {
  require_shape(x.cols() == p.width(), "mamba_block: input width " + std::to_string(x.cols()) +
                                           " does not match block width " + std::to_string(p.width()));
  const Index e = p.inner();
  RmsTape<S> nt;
  Mat<S> normed = rms_norm(x, p.norm, tape ? &nt : nullptr);
  Mat<S> proj = normed * p.w_in.transpose();
  Mat<S> stream = proj.leftCols(e);
  Mat<S> gate = proj.rightCols(e);
  Mat<S> conv = detail::causal_depthwise_conv(stream, p.conv_w, p.conv_b);
  Mat<S> act = conv.unaryExpr([](S v) { return silu(v); });
  SelectiveTape<S> st;
  Mat<S> scan_out = selective_scan(p.ssm, act, tape ? &st : nullptr);
  Mat<S> gated = scan_out.cwiseProduct(gate.unaryExpr([](S v) { return silu(v); }));
  Mat<S> out = x + gated * p.w_out.transpose();
  if (tape) {
    tape->recorded = true;
    tape->norm = std::move(nt);
    tape->normed = std::move(normed);
    tape->stream = std::move(stream);
    tape->gate = std::move(gate);
    tape->conv = std::move(conv);
    tape->act = std::move(act);
    tape->scan = std::move(st);
    tape->scan_out = std::move(scan_out);
    tape->gated = std::move(gated);
  }
  return out;
}

template <typename S>
Mat<S> mamba_block_backward(const MambaBlockParams<S>& p, const MambaBlockTape<S>& tape,
                            const NoDeduce<Mat<S>>& dout, MambaBlockParams<S>& g) {
  if (!tape.recorded) throw UsageError("mamba_block_backward: forward pass was not recorded");
  const Index e = p.inner(), k = p.conv_width(), len = dout.rows();
  g.w_out.noalias() += dout.transpose() * tape.gated;
  const Mat<S> dgated = dout * p.w_out;
  const Mat<S> dscan = dgated.cwiseProduct(tape.gate.unaryExpr([](S v) { return silu(v); }));
  const Mat<S> dgate = dgated.cwiseProduct(tape.scan_out)
                           .cwiseProduct(tape.gate.unaryExpr([](S v) { return silu_grad(v); }));
  const Mat<S> dact = selective_scan_backward(p.ssm, tape.scan, dscan, g.ssm);
  const Mat<S> dconv = dact.cwiseProduct(tape.conv.unaryExpr([](S v) { return silu_grad(v); }));

  g.conv_b += dconv.colwise().sum().transpose();
  Mat<S> dproj(len, 2 * e);
  auto dstream = dproj.leftCols(e);
  dstream.setZero();
  for (Index t = 0; t < len; ++t)
    for (Index i = 0; i < k; ++i) {
      const Index src = t - (k - 1) + i;
      if (src < 0) continue;
      g.conv_w.col(i).array() += (dconv.row(t).array() * tape.stream.row(src).array()).transpose();
      dstream.row(src).array() += dconv.row(t).array() * p.conv_w.col(i).transpose().array();
    }
  dproj.rightCols(e) = dgate;
  g.w_in.noalias() += dproj.transpose() * tape.normed;
  const Mat<S> dnormed = dproj * p.w_in;
  return dout + rms_norm_backward(tape.norm, p.norm, dnormed, g.norm);
}

template <typename S>
struct BlockState {
  Mat<S> conv_window;  // k x E*d, last row is the newest stream value
  SelectiveState<S> ssm;
  Index elements() const { return conv_window.size() + ssm.elements(); }
};

template <typename S>
BlockState<S> block_state_zeros(const MambaBlockParams<S>& p) {
  return {Mat<S>::Zero(p.conv_width(), p.inner()), SelectiveState<S>::zeros(p.ssm)};
}

template <typename S>
RowVec<S> mamba_block_step(const RowVec<S>& x, const MambaBlockParams<S>& p, BlockState<S>& st) {
  const Index e = p.inner(), k = p.conv_width();
  const Mat<S> xm = x;
  const Mat<S> normed = rms_norm(xm, p.norm);
  const RowVec<S> proj = normed.row(0) * p.w_in.transpose();
  if (k > 1) {
    const Mat<S> tail = st.conv_window.bottomRows(k - 1);
    st.conv_window.topRows(k - 1) = tail;
  }
  st.conv_window.row(k - 1) = proj.leftCols(e);
  RowVec<S> conv = p.conv_b.transpose();
  for (Index i = 0; i < k; ++i)
    conv.array() += p.conv_w.col(i).transpose().array() * st.conv_window.row(i).array();
  const RowVec<S> act = conv.unaryExpr([](S v) { return silu(v); });
  const RowVec<S> y = selective_step(p.ssm, act, st.ssm);
  const RowVec<S> gated =
      y.cwiseProduct(proj.rightCols(e).unaryExpr([](S v) { return silu(v); }));
  return x + gated * p.w_out.transpose();
}

template <typename S>
struct ModelParams {
  using Scalar = S;
  Mat<S> embedding;  // vocab x d, also the output head
  std::vector<MambaBlockParams<S>> blocks;
  Vec<S> final_norm;

  Index vocab() const { return embedding.rows(); }
  Index width() const { return embedding.cols(); }

  template <typename F>
  void visit(F&& f, const std::string& prefix = "") {
    f(prefix + "embedding", embedding);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit(f, prefix + "block" + std::to_string(i) + ".");
    f(prefix + "final_norm", final_norm);
  }

  static ModelParams init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    p.embedding.resize(cfg.vocab, cfg.d);
    fill_normal(p.embedding, 1.0 / std::sqrt(double(cfg.d)), rng);
    for (Index i = 0; i < cfg.layers; ++i) p.blocks.push_back(MambaBlockParams<S>::init(cfg, rng));
    p.final_norm = Vec<S>::Ones(cfg.d);
    return p;
  }
};

using TokenIds = std::vector<int>;

template <typename S>
struct LmTape {
  bool recorded = false;
  Index prefix_rows = 0;
  TokenIds ids;
  std::vector<MambaBlockTape<S>> blocks;
  RmsTape<S> final_norm;
  Mat<S> normed;
};

template <typename S>
void check_ids(const TokenIds& ids, Index vocab) {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || ids[i] >= vocab)
      throw InputError("token id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                       " is outside the vocabulary of size " + std::to_string(vocab));
}

// Full-sequence (training-mode) evaluation of [visual_prefix; embed(ids)].
template <typename S>
Mat<S> lm_forward(const Mat<S>& visual_prefix, const TokenIds& ids, const ModelParams<S>& p,
                  LmTape<S>* tape = nullptr) {
  check_ids<S>(ids, p.vocab());
  require_shape(visual_prefix.rows() == 0 || visual_prefix.cols() == p.width(),
                "lm_forward: visual prefix width " + std::to_string(visual_prefix.cols()) +
                    " does not match model width " + std::to_string(p.width()));
  const Index lv = visual_prefix.rows();
  const Index len = lv + Index(ids.size());
  require_shape(len >= 1, "lm_forward: empty input");
  Mat<S> x(len, p.width());
  if (lv > 0) x.topRows(lv) = visual_prefix;
  for (std::size_t i = 0; i < ids.size(); ++i) x.row(lv + Index(i)) = p.embedding.row(ids[i]);
  if (tape) tape->blocks.assign(p.blocks.size(), {});
  for (std::size_t l = 0; l < p.blocks.size(); ++l)
    x = mamba_block(x, p.blocks[l], tape ? &tape->blocks[l] : nullptr);
  RmsTape<S> ft;
  Mat<S> normed = rms_norm(x, p.final_norm, tape ? &ft : nullptr);
  Mat<S> logits = normed * p.embedding.transpose();
  if (!logits.allFinite()) throw NumericError("lm_forward: non-finite logits");
  if (tape) {
    tape->recorded = true;
    tape->prefix_rows = lv;
    tape->ids = ids;
    tape->final_norm = std::move(ft);
    tape->normed = std::move(normed);
  }
  return logits;
}

// Accumulates into `g`; returns dL/d(visual_prefix).
template <typename S>
Mat<S> lm_backward(const ModelParams<S>& p, const LmTape<S>& tape, const NoDeduce<Mat<S>>& dlogits,
                   ModelParams<S>& g) {
  if (!tape.recorded) throw UsageError("lm_backward: forward pass was not recorded");
  g.embedding.noalias() += dlogits.transpose() * tape.normed;
  Mat<S> dx = rms_norm_backward(tape.final_norm, p.final_norm, Mat<S>(dlogits * p.embedding),
                                g.final_norm);
  for (std::size_t l = p.blocks.size(); l-- > 0;)
    dx = mamba_block_backward(p.blocks[l], tape.blocks[l], dx, g.blocks[l]);
  const Index lv = tape.prefix_rows;
  for (std::size_t i = 0; i < tape.ids.size(); ++i)
    g.embedding.row(tape.ids[i]) += dx.row(lv + Index(i));
  return dx.topRows(lv);
}

template <typename S>
struct CrossEntropy {
  S loss = S(0);
  Mat<S> dlogits;
  Index count = 0;
};

// Mean negative log-likelihood of targets[i] over rows with mask[i] set.
template <typename S>
CrossEntropy<S> loss_cross_entropy(const Mat<S>& logits, const std::vector<int>& targets,
                                   const std::vector<bool>& mask) {
  require_shape(Index(targets.size()) == logits.rows() && Index(mask.size()) == logits.rows(),
                "loss_cross_entropy: targets and mask must have one entry per logits row");
  CrossEntropy<S> r;
  for (bool m : mask) r.count += m ? 1 : 0;
  if (r.count == 0) throw InputError("loss_cross_entropy: mask selects no positions");
  r.dlogits = Mat<S>::Zero(logits.rows(), logits.cols());
  const S inv = S(1) / S(r.count);
  for (Index i = 0; i < logits.rows(); ++i) {
    if (!mask[std::size_t(i)]) continue;
    const int t = targets[std::size_t(i)];
    if (t < 0 || t >= logits.cols()) throw InputError("loss_cross_entropy: target out of range");
    const S mx = logits.row(i).maxCoeff();
    const RowVec<S> e = (logits.row(i).array() - mx).exp().matrix();
    const S z = e.sum();
    r.loss += (std::log(z) + mx - logits(i, t)) * inv;
    r.dlogits.row(i) = e * (inv / z);
    r.dlogits(i, t) -= inv;
  }
  return r;
}

template <typename S>
struct DecodeState {
  std::vector<BlockState<S>> blocks;
  Index elements() const {
    Index n = 0;
    for (const auto& b : blocks) n += b.elements();
    return n;
  }
};

template <typename S>
DecodeState<S> decode_state_zeros(const ModelParams<S>& p) {
  DecodeState<S> st;
  for (const auto& b : p.blocks) st.blocks.push_back(block_state_zeros(b));
  return st;
}

// Consumes one input row, returns the next-token logits.
template <typename S>
RowVec<S> lm_step(const RowVec<S>& x, const ModelParams<S>& p, DecodeState<S>& st) {
  RowVec<S> h = x;
  for (std::size_t l = 0; l < p.blocks.size(); ++l) h = mamba_block_step(h, p.blocks[l], st.blocks[l]);
  const Mat<S> hm = h;
  return rms_norm(hm, p.final_norm).row(0) * p.embedding.transpose();
}

// Lowest id wins ties.
template <typename S>
int argmax_token(const RowVec<S>& logits) {
  Index best = 0;
  for (Index i = 1; i < logits.size(); ++i)
    if (logits(i) > logits(best)) best = i;
  return int(best);
}

struct GenerateOptions {
  Index max_len = 16;
  int eos_id = -1;  // negative: never stop early
};

// Greedy recurrent decoding. The prefix and prompt are consumed one step at a
// time with O(1) carried state; `step_logits`, if given, receives the logits
// row used to choose each generated token.
template <typename S>
TokenIds generate_greedy(const Mat<S>& visual_prefix, const TokenIds& prompt,
                         const ModelParams<S>& p, const GenerateOptions& opt,
                         std::vector<RowVec<S>>* step_logits = nullptr,
                         DecodeState<S>* final_state = nullptr) {
  if (opt.max_len < 1) throw InputError("generate_greedy: max_len must be >= 1");
  check_ids<S>(prompt, p.vocab());
  if (visual_prefix.rows() + Index(prompt.size()) == 0)
    throw InputError("generate_greedy: nothing to condition on");
  auto st = decode_state_zeros(p);
  RowVec<S> logits;
  for (Index i = 0; i < visual_prefix.rows(); ++i) logits = lm_step<S>(visual_prefix.row(i), p, st);
  for (int id : prompt) logits = lm_step<S>(p.embedding.row(id), p, st);
  TokenIds out;
  while (Index(out.size()) < opt.max_len) {
    if (!logits.allFinite()) throw NumericError("generate_greedy: non-finite logits");
    if (step_logits) step_logits->push_back(logits);
    const int next = argmax_token(logits);
    out.push_back(next);
    if (next == opt.eos_id || Index(out.size()) == opt.max_len) break;
    logits = lm_step<S>(p.embedding.row(next), p, st);
  }
  if (final_state) *final_state = std::move(st);
  return out;
}

}  // namespace abmamba
