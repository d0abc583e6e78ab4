#pragma once

// Throughput and memory benchmarks: one gated selective-scan block against the
// causal attention reference at equal width.

#include "abmamba/attention.hpp"
#include "abmamba/config.hpp"
#include "abmamba/model.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace abmamba {

struct TimingStats {
  double mean = 0.0;
  double stddev = 0.0;
  Index trials = 0;
  Index repeats = 1;  // calls per timed trial, raised when the timer is too coarse
};

struct ThroughputRow {
  Index length = 0;
  TimingStats ssm, attention;
  Index ssm_state_elements = 0;
  Index attention_cache_elements = 0;
};

struct DecodeRate {
  double ssm_tokens_per_s = 0.0;
  double attention_tokens_per_s = 0.0;
  TimingStats ssm, attention;
  double ratio() const { return ssm_tokens_per_s / attention_tokens_per_s; }
};

struct BenchReport {
  std::vector<ThroughputRow> rows;
  double ssm_slope = 0.0;
  double attention_slope = 0.0;
  DecodeRate decode;
  double full_model_tokens_per_s = 0.0;  // greedy decode of the whole language model
  std::vector<std::string> warnings;
};

struct MemoryRow {
  Index step = 0;
  Index ssm_state_elements = 0;
  Index attention_cache_elements = 0;
};

struct MemoryReport {
  std::vector<MemoryRow> rows;
  Index closed_form = 0;  // layers * E*d * (Q + k_conv)
  bool ssm_constant = false;
  bool attention_linear = false;
};

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Times `fn` for `warmup` untimed calls then `trials` timed ones. When one call
// is shorter than `min_seconds` it is repeated inside each trial and a warning
// is appended.
TimingStats time_trials(const std::function<void()>& fn, Index trials, Index warmup,
                        std::vector<std::string>* warnings = nullptr, const std::string& label = "",
                        double min_seconds = 1e-3);

void write_bench_csv(const BenchReport& r, std::ostream& out);
void write_memory_csv(const MemoryReport& r, std::ostream& out);

void validate_bench(const BenchConfig& b);

// Block hyperparameters come from the model config; width from bench.d.
inline ModelConfig bench_block_config(const RunConfig& cfg) {
  ModelConfig mc = cfg.model;
  mc.d = cfg.bench.d;
  mc.layers = 1;
  return mc;
}

template <typename S>
BenchReport bench_throughput(const RunConfig& cfg, std::uint64_t seed = 0) {
  const BenchConfig& b = cfg.bench;
  validate_bench(b);
  const ModelConfig mc = bench_block_config(cfg);
  Rng rng(seed);
  const auto block = MambaBlockParams<S>::init(mc, rng);
  const auto attn = AttentionParams<S>::init(b.d, rng);
  BenchReport rep;
  std::vector<double> lx, ls, la;
  for (Index len : b.lengths) {
    Mat<S> x(len, b.d);
    fill_normal(x, 1.0, rng);
    ThroughputRow row;
    row.length = len;
    volatile S sink = 0;
    row.ssm = time_trials([&] { sink = sink + mamba_block(x, block)(len - 1, 0); }, b.trials, b.warmup,
                          &rep.warnings, "ssm L=" + std::to_string(len));
    row.attention = time_trials([&] { sink = sink + attention_forward(x, attn)(len - 1, 0); }, b.trials,
                                b.warmup, &rep.warnings, "attention L=" + std::to_string(len));
    row.ssm_state_elements = block_state_zeros(block).elements();
    row.attention_cache_elements = 2 * b.d * len;
    lx.push_back(double(len));
    ls.push_back(row.ssm.mean);
    la.push_back(row.attention.mean);
    rep.rows.push_back(row);
  }
  rep.ssm_slope = loglog_slope(lx, ls);
  rep.attention_slope = loglog_slope(lx, la);

  // Recurrent decode of `decode_tokens` steps after `decode_context` tokens of
  // context. Context ingestion is untimed; each trial restarts from it.
  Mat<S> ctx(b.decode_context, b.d);
  fill_normal(ctx, 1.0, rng);
  auto ssm_ctx = block_state_zeros(block);
  for (Index i = 0; i < ctx.rows(); ++i) mamba_block_step<S>(ctx.row(i), block, ssm_ctx);
  const auto attn_ctx = kv_cache_from(ctx, attn);
  Mat<S> feed(b.decode_tokens, b.d);
  fill_normal(feed, 1.0, rng);
  volatile S sink = 0;
  rep.decode.ssm = time_trials(
      [&] {
        auto st = ssm_ctx;
        for (Index i = 0; i < feed.rows(); ++i) sink = sink + mamba_block_step<S>(feed.row(i), block, st)(0);
      },
      b.trials, b.warmup, &rep.warnings, "ssm decode");
  rep.decode.attention = time_trials(
      [&] {
        auto cache = attn_ctx;
        for (Index i = 0; i < feed.rows(); ++i) sink = sink + attention_step<S>(feed.row(i), attn, cache)(0);
      },
      b.trials, b.warmup, &rep.warnings, "attention decode");
  rep.decode.ssm_tokens_per_s = double(b.decode_tokens) / rep.decode.ssm.mean;
  rep.decode.attention_tokens_per_s = double(b.decode_tokens) / rep.decode.attention.mean;

  const auto lm = ModelParams<S>::init(cfg.model, rng);
  const TimingStats full = time_trials(
      [&] {
        auto st = decode_state_zeros(lm);
        int tok = 0;
        for (Index i = 0; i < b.decode_tokens; ++i) tok = argmax_token(lm_step<S>(lm.embedding.row(tok), lm, st));
        sink = sink + S(tok);
      },
      b.trials, b.warmup, &rep.warnings, "full model decode");
  rep.full_model_tokens_per_s = double(b.decode_tokens) / full.mean;
  return rep;
}

// Instrumented element counts on the decode paths of the full language model
// and of an attention layer of the same width.
template <typename S>
MemoryReport bench_memory(const RunConfig& cfg, std::uint64_t seed = 0) {
  if (cfg.bench.memory_steps < 1) throw ConfigError("bench.memory_steps must be >= 1");
  Rng rng(seed);
  const auto lm = ModelParams<S>::init(cfg.model, rng);
  const auto attn = AttentionParams<S>::init(cfg.model.d, rng);
  MemoryReport rep;
  rep.closed_form = cfg.model.decode_state_elements();
  auto st = decode_state_zeros(lm);
  KvCache<S> cache;
  std::uniform_int_distribution<int> tok(0, int(lm.vocab()) - 1);
  for (Index i = 1; i <= cfg.bench.memory_steps; ++i) {
    const RowVec<S> x = lm.embedding.row(tok(rng));
    lm_step<S>(x, lm, st);
    attention_step<S>(x, attn, cache);
    rep.rows.push_back({i, st.elements(), cache.elements()});
  }
  rep.ssm_constant = true;
  rep.attention_linear = true;
  for (const auto& r : rep.rows) {
    rep.ssm_constant = rep.ssm_constant && r.ssm_state_elements == rep.rows.front().ssm_state_elements;
    rep.attention_linear = rep.attention_linear && r.attention_cache_elements == 2 * cfg.model.d * r.step;
  }
  return rep;
}

}  // namespace abmamba
