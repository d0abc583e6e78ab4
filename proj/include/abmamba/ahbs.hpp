#pragma once

// Aligned hierarchical bidirectional scan projector: spatial pooling, an affine
// projector, M temporal-resolution pathways each scanned in both directions,
// aggregation at full temporal resolution, and optional temporal compression.

#include "abmamba/core.hpp"
#include "abmamba/selective.hpp"

#include <optional>
#include <string>
#include <vector>

namespace abmamba {

// T x N x d features, stored frame-major: row t*N + n holds token n of frame t.
template <typename S>
struct FeatureTensor {
  using Scalar = S;
  Index frames = 0;
  Index tokens = 0;
  Mat<S> data;

  FeatureTensor() = default;
  FeatureTensor(Index t, Index n, Mat<S> d) : frames(t), tokens(n), data(std::move(d)) {
    require_shape(data.rows() == t * n, "FeatureTensor: row count must equal frames * tokens");
  }
  static FeatureTensor zeros(Index t, Index n, Index c) {
    return FeatureTensor(t, n, Mat<S>::Zero(t * n, c));
  }
  Index channels() const { return data.cols(); }
  auto at(Index t, Index n) { return data.row(t * tokens + n); }
  auto at(Index t, Index n) const { return data.row(t * tokens + n); }
};

// Output row i is the mean of input rows groups[i].
using RowGroups = std::vector<std::vector<Index>>;

template <typename S>
Mat<S> group_mean(const Mat<S>& x, const RowGroups& groups) {
  Mat<S> out = Mat<S>::Zero(Index(groups.size()), x.cols());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (Index r : groups[g]) out.row(Index(g)) += x.row(r);
    out.row(Index(g)) /= S(groups[g].size());
  }
  return out;
}

template <typename S>
Mat<S> group_mean_backward(const Mat<S>& dout, const RowGroups& groups, Index input_rows) {
  Mat<S> dx = Mat<S>::Zero(input_rows, dout.cols());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const S w = S(1) / S(groups[g].size());
    for (Index r : groups[g]) dx.row(r) += w * dout.row(Index(g));
  }
  return dx;
}

// Token groups for spatial pooling within one frame. A square token grid whose
// side is divisible by `window` pools window x window blocks; otherwise tokens
// are pooled in contiguous runs of window^2 and the remainder is dropped.
inline RowGroups spatial_pool_groups(Index tokens, Index window) {
  if (window < 1) throw ConfigError("spatial_pool: window must be >= 1");
  const Index area = window * window;
  if (area > tokens)
    throw ConfigError("spatial_pool: window^2 = " + std::to_string(area) + " exceeds " +
                      std::to_string(tokens) + " tokens per frame");
  RowGroups groups;
  const auto side = Index(std::lround(std::sqrt(double(tokens))));
  if (side * side == tokens && side % window == 0) {
    for (Index by = 0; by < side / window; ++by)
      for (Index bx = 0; bx < side / window; ++bx) {
        std::vector<Index> g;
        for (Index dy = 0; dy < window; ++dy)
          for (Index dx = 0; dx < window; ++dx)
            g.push_back((by * window + dy) * side + bx * window + dx);
        groups.push_back(std::move(g));
      }
    return groups;
  }
  for (Index start = 0; start + area <= tokens; start += area) {
    std::vector<Index> g(static_cast<std::size_t>(area));
    for (Index i = 0; i < area; ++i) g[std::size_t(i)] = start + i;
    groups.push_back(std::move(g));
  }
  return groups;
}

inline RowGroups expand_token_groups(const RowGroups& per_frame, Index frames, Index tokens) {
  RowGroups out;
  for (Index t = 0; t < frames; ++t)
    for (const auto& g : per_frame) {
      std::vector<Index> r;
      for (Index n : g) r.push_back(t * tokens + n);
      out.push_back(std::move(r));
    }
  return out;
}

// Averages non-overlapping windows of `factor` frames; trailing frames that do
// not fill a window are dropped.
inline RowGroups frame_window_groups(Index frames, Index tokens, Index factor) {
  RowGroups out;
  const Index pooled = frames / factor;
  for (Index j = 0; j < pooled; ++j)
    for (Index n = 0; n < tokens; ++n) {
      std::vector<Index> r;
      for (Index t = j * factor; t < (j + 1) * factor; ++t) r.push_back(t * tokens + n);
      out.push_back(std::move(r));
    }
  return out;
}

inline Index ipow(Index base, Index exp) {
  Index r = 1;
  for (Index i = 0; i < exp; ++i) r *= base;
  return r;
}

inline Index pathway_factor(Index m, Index stride) { return ipow(stride, m - 1); }

inline Index pathway_length(Index frames, Index m, Index stride) {
  return frames / pathway_factor(m, stride);
}

template <typename S>
FeatureTensor<S> spatial_pool(const FeatureTensor<S>& v, Index window) {
  const auto per_frame = spatial_pool_groups(v.tokens, window);
  const auto groups = expand_token_groups(per_frame, v.frames, v.tokens);
  return FeatureTensor<S>(v.frames, Index(per_frame.size()), group_mean(v.data, groups));
}

template <typename S>
FeatureTensor<S> temporal_pool(const FeatureTensor<S>& v, Index m, Index stride) {
  if (m < 1) throw ConfigError("temporal_pool: pathway index must be >= 1");
  const Index factor = pathway_factor(m, stride);
  if (v.frames < factor)
    throw ConfigError("temporal_pool: pathway " + std::to_string(m) + " is empty (T = " +
                      std::to_string(v.frames) + " < stride^(m-1) = " + std::to_string(factor) +
                      ")");
  return FeatureTensor<S>(v.frames / factor, v.tokens,
                          group_mean(v.data, frame_window_groups(v.frames, v.tokens, factor)));
}

// Nearest-neighbour repetition of pooled frames back to `frames`; the last
// pooled frame pads any floor remainder.
inline std::vector<Index> upsample_source_frames(Index pooled, Index factor, Index frames) {
  std::vector<Index> src(static_cast<std::size_t>(frames));
  for (Index t = 0; t < frames; ++t) src[std::size_t(t)] = std::min(t / factor, pooled - 1);
  return src;
}

template <typename S>
FeatureTensor<S> temporal_upsample(const FeatureTensor<S>& y, Index stride, Index m, Index frames) {
  const Index factor = pathway_factor(m, stride);
  require_shape(y.frames == frames / factor, "temporal_upsample: pathway length " +
                                                 std::to_string(y.frames) + " does not match " +
                                                 "floor(T / stride^(m-1))");
  const auto src = upsample_source_frames(y.frames, factor, frames);
  auto out = FeatureTensor<S>::zeros(frames, y.tokens, y.channels());
  for (Index t = 0; t < frames; ++t)
    out.data.middleRows(t * y.tokens, y.tokens) = y.data.middleRows(src[std::size_t(t)] * y.tokens, y.tokens);
  return out;
}

template <typename S>
FeatureTensor<S> temporal_upsample_backward(const FeatureTensor<S>& dout, Index stride, Index m,
                                            Index pooled) {
  const Index factor = pathway_factor(m, stride);
  const auto src = upsample_source_frames(pooled, factor, dout.frames);
  auto dy = FeatureTensor<S>::zeros(pooled, dout.tokens, dout.channels());
  for (Index t = 0; t < dout.frames; ++t)
    dy.data.middleRows(src[std::size_t(t)] * dout.tokens, dout.tokens) +=
        dout.data.middleRows(t * dout.tokens, dout.tokens);
  return dy;
}

template <typename S>
Mat<S> reverse_rows(const Mat<S>& x) {
  return x.colwise().reverse();
}

template <typename S>
struct BidirectionalTape {
  SelectiveTape<S> fwd;
  SelectiveTape<S> bwd;
  bool has_backward = false;
};

// Flattened frame-major scan: fwd(seq) + rev(bwd(rev(seq))). The backward
// branch is re-reversed so output position t lines up with input position t.
// A null `bwd` gives the forward-only (causal) variant.
template <typename S>
FeatureTensor<S> bidirectional_scan(const FeatureTensor<S>& vm, const SelectiveSSMLayer<S>& fwd,
                                    const SelectiveSSMLayer<S>* bwd,
                                    BidirectionalTape<S>* tape = nullptr) {
  require_shape(fwd.channels() == vm.channels(),
                "bidirectional_scan: layer width " + std::to_string(fwd.channels()) +
                    " does not match feature width " + std::to_string(vm.channels()));
  Mat<S> out = selective_scan(fwd, vm.data, tape ? &tape->fwd : nullptr);
  if (bwd) {
    require_shape(bwd->channels() == vm.channels(), "bidirectional_scan: backward layer width");
    out += reverse_rows<S>(
        selective_scan(*bwd, reverse_rows<S>(vm.data), tape ? &tape->bwd : nullptr));
  }
  if (tape) tape->has_backward = bwd != nullptr;
  return FeatureTensor<S>(vm.frames, vm.tokens, std::move(out));
}

template <typename S>
Mat<S> bidirectional_scan_backward(const SelectiveSSMLayer<S>& fwd, const SelectiveSSMLayer<S>* bwd,
                                   const BidirectionalTape<S>& tape, const NoDeduce<Mat<S>>& dout,
                                   SelectiveSSMLayer<S>& gfwd, SelectiveSSMLayer<S>* gbwd) {
  Mat<S> dx = selective_scan_backward(fwd, tape.fwd, dout, gfwd);
  if (bwd) {
    if (!tape.has_backward || !gbwd)
      throw UsageError("bidirectional_scan_backward: backward branch was not recorded");
    dx += reverse_rows<S>(selective_scan_backward(*bwd, tape.bwd, reverse_rows<S>(dout), *gbwd));
  }
  return dx;
}

enum class AggregateMode { Add, Concat };

inline AggregateMode parse_aggregate_mode(const std::string& s) {
  if (s == "add") return AggregateMode::Add;
  if (s == "concat") return AggregateMode::Concat;
  throw ConfigError("unknown aggregate mode '" + s + "' (expected add or concat)");
}

inline std::string to_string(AggregateMode m) { return m == AggregateMode::Add ? "add" : "concat"; }

// Add: elementwise sum. Concat: channel concatenation then `concat_w`
// (width x M*width) maps back to the pathway width.
template <typename S>
Mat<S> aggregate(const std::vector<Mat<S>>& outputs, AggregateMode mode,
                 const Mat<S>* concat_w = nullptr) {
  require_shape(!outputs.empty(), "aggregate: no pathway outputs");
  for (const auto& o : outputs)
    require_shape(o.rows() == outputs[0].rows() && o.cols() == outputs[0].cols(),
                  "aggregate: pathway outputs differ in shape");
  if (mode == AggregateMode::Add) {
    Mat<S> sum = outputs[0];
    for (std::size_t i = 1; i < outputs.size(); ++i) sum += outputs[i];
    return sum;
  }
  if (!concat_w) throw ConfigError("aggregate: concat mode needs an output projection");
  const Index w = outputs[0].cols();
  require_shape(concat_w->rows() == w && concat_w->cols() == w * Index(outputs.size()),
                "aggregate: concat projection shape mismatch");
  Mat<S> out = Mat<S>::Zero(outputs[0].rows(), w);
  for (std::size_t i = 0; i < outputs.size(); ++i)
    out.noalias() += outputs[i] * concat_w->middleCols(Index(i) * w, w).transpose();
  return out;
}

// Returns per-pathway adjoints; accumulates into dconcat_w for concat mode.
template <typename S>
std::vector<Mat<S>> aggregate_backward(const std::vector<Mat<S>>& outputs, AggregateMode mode,
                                       const Mat<S>* concat_w, const NoDeduce<Mat<S>>& dout,
                                       Mat<S>* dconcat_w) {
  std::vector<Mat<S>> d(outputs.size());
  if (mode == AggregateMode::Add) {
    for (auto& x : d) x = dout;
    return d;
  }
  const Index w = outputs[0].cols();
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    d[i] = dout * concat_w->middleCols(Index(i) * w, w);
    if (dconcat_w) dconcat_w->middleCols(Index(i) * w, w).noalias() += dout.transpose() * outputs[i];
  }
  return d;
}

struct AhbsConfig {
  Index pathways = 3;
  Index stride = 2;
  Index spatial_pool = 2;
  AggregateMode aggregate = AggregateMode::Add;
  Index temporal_compress = 1;
  Index d_model = 64;
  Index state_dim = 16;
  bool backward_scan = true;  // false: forward-only (causal) pathways
  bool scan = true;           // false: projector only, no temporal scan
  bool project_first = true;  // false: scan at the input width, then project

  void validate() const {
    if (pathways < 1) throw ConfigError("ahbs.pathways must be >= 1");
    if (stride < 2) throw ConfigError("ahbs.stride must be >= 2");
    if (spatial_pool < 1) throw ConfigError("ahbs.spatial_pool must be >= 1");
    if (temporal_compress < 1) throw ConfigError("ahbs.temporal_compress must be >= 1");
    if (d_model < 1) throw ConfigError("ahbs.d_model must be >= 1");
    if (state_dim < 1) throw ConfigError("state dimension must be >= 1");
  }

  void validate_for(Index frames) const {
    validate();
    if (scan && frames < pathway_factor(pathways, stride))
      throw ConfigError("ahbs: T = " + std::to_string(frames) + " is shorter than stride^(M-1) = " +
                        std::to_string(pathway_factor(pathways, stride)) +
                        "; the coarsest pathway would be empty");
  }
};

template <typename S>
struct AhbsParams {
  using Scalar = S;
  Mat<S> proj_w;  // d_model x d_v
  Vec<S> proj_b;  // d_model
  std::vector<SelectiveSSMLayer<S>> fwd;
  std::vector<SelectiveSSMLayer<S>> bwd;
  Mat<S> concat_w;  // width x M*width, concat mode only

  template <typename F>
  void visit(F&& f, const std::string& prefix = "") {
    f(prefix + "proj_w", proj_w);
    f(prefix + "proj_b", proj_b);
    for (std::size_t m = 0; m < fwd.size(); ++m) {
      const std::string p = prefix + "pathway" + std::to_string(m + 1) + ".";
      fwd[m].visit(f, p + "fwd.");
      if (m < bwd.size()) bwd[m].visit(f, p + "bwd.");
    }
    if (concat_w.size() > 0) f(prefix + "concat_w", concat_w);
  }

  static AhbsParams init(const AhbsConfig& cfg, Index d_in, Rng& rng) {
    cfg.validate();
    AhbsParams p;
    p.proj_w.resize(cfg.d_model, d_in);
    fill_uniform(p.proj_w, 1.0 / std::sqrt(double(d_in)), rng);
    p.proj_b = Vec<S>::Zero(cfg.d_model);
    const Index width = cfg.project_first ? cfg.d_model : d_in;
    if (cfg.scan) {
      for (Index m = 0; m < cfg.pathways; ++m) {
        p.fwd.push_back(SelectiveSSMLayer<S>::init(width, cfg.state_dim, rng));
        if (cfg.backward_scan) p.bwd.push_back(SelectiveSSMLayer<S>::init(width, cfg.state_dim, rng));
      }
      if (cfg.aggregate == AggregateMode::Concat) {
        p.concat_w = Mat<S>::Zero(width, width * cfg.pathways);
        fill_uniform(p.concat_w, 1.0 / std::sqrt(double(width * cfg.pathways)), rng);
      }
    }
    return p;
  }
};

template <typename S>
struct AhbsTape {
  bool recorded = false;
  Index in_frames = 0, in_tokens = 0, in_channels = 0;
  Index pooled_tokens = 0;
  RowGroups spatial_groups;
  Mat<S> pooled;                         // spatially pooled input
  Mat<S> projected;                      // after the projector (project-first order)
  Mat<S> scan_input;                     // input to the pathways
  std::vector<Index> pathway_frames;     // T_m per pathway
  std::vector<BidirectionalTape<S>> scans;
  std::vector<Mat<S>> upsampled;         // per-pathway output at full resolution
  Mat<S> aggregated;                     // after aggregation
  Mat<S> pre_compress;                   // final width, before temporal compression
};

namespace detail {

template <typename S>
Mat<S> affine(const Mat<S>& x, const Mat<S>& w, const Vec<S>& b) {
  return (x * w.transpose()).rowwise() + b.transpose();
}

}  // namespace detail

template <typename S>
FeatureTensor<S> ahbs_forward(const FeatureTensor<S>& v, const AhbsConfig& cfg,
                              const AhbsParams<S>& params, AhbsTape<S>* tape = nullptr) {
  cfg.validate_for(v.frames);
  require_shape(params.proj_w.cols() == v.channels(),
                "ahbs_forward: projector expects " + std::to_string(params.proj_w.cols()) +
                    " input channels, got " + std::to_string(v.channels()));
  if (cfg.scan)
    require_shape(Index(params.fwd.size()) == cfg.pathways &&
                      (!cfg.backward_scan || Index(params.bwd.size()) == cfg.pathways),
                  "ahbs_forward: pathway count does not match config");
  const Index frames = v.frames;

  const auto per_frame = spatial_pool_groups(v.tokens, cfg.spatial_pool);
  const Index nd = Index(per_frame.size());
  const auto sgroups = expand_token_groups(per_frame, frames, v.tokens);
  Mat<S> pooled = group_mean(v.data, sgroups);

  Mat<S> projected;
  Mat<S> scan_in;
  if (cfg.project_first) {
    projected = detail::affine(pooled, params.proj_w, params.proj_b);
    scan_in = projected;
  } else {
    scan_in = pooled;
  }

  Mat<S> mixed;
  std::vector<Index> pathway_frames;
  std::vector<BidirectionalTape<S>> scans;
  std::vector<Mat<S>> ups;
  if (cfg.scan) {
    FeatureTensor<S> base(frames, nd, scan_in);
    for (Index m = 1; m <= cfg.pathways; ++m) {
      auto vm = temporal_pool(base, m, cfg.stride);
      pathway_frames.push_back(vm.frames);
      BidirectionalTape<S> bt;
      const SelectiveSSMLayer<S>* bwd = cfg.backward_scan ? &params.bwd[std::size_t(m - 1)] : nullptr;
      auto ym = bidirectional_scan(vm, params.fwd[std::size_t(m - 1)], bwd, tape ? &bt : nullptr);
      ups.push_back(temporal_upsample(ym, cfg.stride, m, frames).data);
      if (tape) scans.push_back(std::move(bt));
    }
    mixed = aggregate(ups, cfg.aggregate, cfg.aggregate == AggregateMode::Concat ? &params.concat_w : nullptr);
  } else {
    mixed = scan_in;
  }

  Mat<S> pre = cfg.project_first ? mixed : detail::affine(mixed, params.proj_w, params.proj_b);

  FeatureTensor<S> out;
  if (cfg.temporal_compress == 1) {
    out = FeatureTensor<S>(frames, nd, pre);
  } else {
    const Index c = cfg.temporal_compress;
    out = FeatureTensor<S>(frames / c, nd, group_mean(pre, frame_window_groups(frames, nd, c)));
  }
  if (!out.data.allFinite()) throw NumericError("ahbs_forward: non-finite output");

  if (tape) {
    tape->recorded = true;
    tape->in_frames = frames;
    tape->in_tokens = v.tokens;
    tape->in_channels = v.channels();
    tape->pooled_tokens = nd;
    tape->spatial_groups = sgroups;
    tape->pooled = std::move(pooled);
    tape->projected = std::move(projected);
    tape->scan_input = std::move(scan_in);
    tape->pathway_frames = std::move(pathway_frames);
    tape->scans = std::move(scans);
    tape->upsampled = std::move(ups);
    tape->aggregated = std::move(mixed);
    tape->pre_compress = std::move(pre);
  }
  return out;
}

// Accumulates parameter gradients into `grads`; returns dL/dV.
template <typename S>
FeatureTensor<S> ahbs_backward(const AhbsConfig& cfg, const AhbsParams<S>& params,
                               const AhbsTape<S>& tape, const FeatureTensor<S>& dout,
                               AhbsParams<S>& grads) {
  if (!tape.recorded) throw UsageError("ahbs_backward: forward pass was not recorded");
  const Index frames = tape.in_frames;
  const Index nd = tape.pooled_tokens;

  Mat<S> dpre;
  if (cfg.temporal_compress == 1) {
    dpre = dout.data;
  } else {
    dpre = group_mean_backward(dout.data, frame_window_groups(frames, nd, cfg.temporal_compress),
                               frames * nd);
  }

  auto affine_backward = [&](const Mat<S>& x, const Mat<S>& dy) {
    grads.proj_w.noalias() += dy.transpose() * x;
    grads.proj_b += dy.colwise().sum().transpose();
    return Mat<S>(dy * params.proj_w);
  };

  Mat<S> dmixed = cfg.project_first ? dpre : affine_backward(tape.aggregated, dpre);
  Mat<S> dscan_in;
  if (!cfg.scan) {
    dscan_in = std::move(dmixed);
  } else {
    const auto* cw = cfg.aggregate == AggregateMode::Concat ? &params.concat_w : nullptr;
    auto* dcw = cfg.aggregate == AggregateMode::Concat ? &grads.concat_w : nullptr;
    auto dups = aggregate_backward(tape.upsampled, cfg.aggregate, cw, dmixed, dcw);
    dscan_in = Mat<S>::Zero(tape.scan_input.rows(), tape.scan_input.cols());
    for (Index m = 1; m <= cfg.pathways; ++m) {
      const auto mi = std::size_t(m - 1);
      const Index tm = tape.pathway_frames[mi];
      auto dym = temporal_upsample_backward(FeatureTensor<S>(frames, nd, dups[mi]), cfg.stride, m, tm);
      const SelectiveSSMLayer<S>* bwd = cfg.backward_scan ? &params.bwd[mi] : nullptr;
      SelectiveSSMLayer<S>* gbwd = cfg.backward_scan ? &grads.bwd[mi] : nullptr;
      Mat<S> dvm = bidirectional_scan_backward(params.fwd[mi], bwd, tape.scans[mi], dym.data,
                                               grads.fwd[mi], gbwd);
      dscan_in += group_mean_backward(
          dvm, frame_window_groups(frames, nd, pathway_factor(m, cfg.stride)), frames * nd);
    }
  }
  Mat<S> dpooled = cfg.project_first ? affine_backward(tape.pooled, dscan_in) : dscan_in;
  Mat<S> dv = group_mean_backward(dpooled, tape.spatial_groups, tape.in_frames * tape.in_tokens);
  return FeatureTensor<S>(tape.in_frames, tape.in_tokens, std::move(dv));
}

}  // namespace abmamba
