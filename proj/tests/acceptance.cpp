// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include "abmamba/bench.hpp"
#include "abmamba/experiment.hpp"
#include "abmamba/ssm.hpp"
#include "gradcheck.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

using namespace abmamba;
using abmamba::testing::FdResult;

namespace {

using V = Vec<double>;
using M = Mat<double>;
using FT = FeatureTensor<double>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;  // <= 0: no limit
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

V random_vec(Index n, Rng& rng) {
  V v(n);
  fill_uniform(v, 1.0, rng);
  return v;
}

M random_mat(Index r, Index c, Rng& rng, double scale = 1.0) {
  M m(r, c);
  fill_uniform(m, scale, rng);
  return m;
}

DiscreteSSM<double> random_discrete(Index q, Rng& rng, bool diagonal) {
  std::uniform_real_distribution<double> neg(-2.0, -0.05), u(-1.0, 1.0), dt(0.05, 0.5);
  V b = random_vec(q, rng), c = random_vec(q, rng);
  if (diagonal) {
    V a(q);
    for (Index i = 0; i < q; ++i) a(i) = neg(rng);
    return discretize_zoh(ContinuousSSM<double>::make_diagonal(a, b, c, u(rng)), dt(rng));
  }
  M a = random_mat(q, q, rng, 0.3);
  a.diagonal().array() -= 1.0;
  return discretize_zoh(ContinuousSSM<double>::make_dense(a, b, c, u(rng)), dt(rng));
}

// Lower-triangular Toeplitz product: the convolutional form as a dense matrix.
V toeplitz_apply(const V& kernel, const V& x, double d) {
  const Index n = x.size();
  M t = M::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= i; ++j) t(i, j) = kernel(i - j);
  t.diagonal().array() += d;
  return t * x;
}

SelectiveSSMLayer<double> random_layer(Index d, Index q, Rng& rng) {
  auto l = SelectiveSSMLayer<double>::init(d, q, rng);
  fill_uniform(l.w_delta, 0.5, rng);
  fill_uniform(l.b_b, 0.3, rng);
  fill_uniform(l.b_c, 0.3, rng);
  fill_uniform(l.d_skip, 1.0, rng);
  l.a_log += random_mat(d, q, rng, 0.2);
  return l;
}

Outcome duality() {
  Rng rng(101);
  std::uniform_int_distribution<int> qd(1, 8), ld(1, 128);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index q = qd(rng), len = ld(rng);
    auto d = random_discrete(q, rng, trial % 2 == 0);
    V x = random_vec(len, rng);
    const V rec = scan_recurrent(d, x, V::Zero(q)).y;
    const V kernel = ssm_kernel(d, len);
    worst = std::max(worst, (rec - conv_apply(kernel, x, d.d)).cwiseAbs().maxCoeff());
    worst = std::max(worst, (rec - toeplitz_apply(kernel, x, d.d)).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-9, "100 instances, max |recurrent - convolution| = " + fmt("%.3g", worst)};
}

Outcome selective_to_lti() {
  Rng rng(102);
  std::uniform_int_distribution<int> dd(1, 6), qd(1, 8), ld(1, 64);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = dd(rng), q = qd(rng), len = ld(rng);
    auto l = random_layer(d, q, rng);
    l.w_delta.setZero();
    l.w_b.setZero();
    l.w_c.setZero();
    M u = random_mat(len, d, rng);
    const M y = selective_scan(l, u);
    const M a = l.a_matrix();
    for (Index ch = 0; ch < d; ++ch) {
      const double delta = std::log1p(std::exp(l.b_delta(ch)));
      DiscreteSSM<double> lti;
      lti.a_bar_diag = (delta * a.row(ch).transpose()).array().exp();
      lti.b_bar = delta * l.b_b;
      lti.c = l.b_c;
      lti.d = l.d_skip(ch);
      lti.delta = delta;
      const V ref = scan_recurrent(lti, V(u.col(ch)), V::Zero(q)).y;
      worst = std::max(worst, (ref - y.col(ch)).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-9, "50 scans, max |selective - LTI| = " + fmt("%.3g", worst)};
}

Outcome gradient_suite() {
  Rng rng(103);
  std::map<std::string, FdResult> results;

  for (bool diagonal : {true, false}) {
    auto d = random_discrete(4, rng, diagonal);
    V x = random_vec(12, rng), h0 = random_vec(4, rng), w = random_vec(12, rng), wh = random_vec(4, rng);
    auto loss = [&] {
      auto r = scan_recurrent(d, x, h0);
      return w.dot(r.y) + wh.dot(r.h_final);
    };
    ScanTape<double> tape;
    scan_recurrent(d, x, h0, &tape);
    auto g = scan_recurrent_backward(d, tape, w, wh);
    auto& fd = results[diagonal ? "scan (diagonal)" : "scan (dense)"];
    abmamba::testing::fd_check_dense(x, g.x, loss, "x", fd);
    abmamba::testing::fd_check_dense(h0, g.h0, loss, "h0", fd);
    if (diagonal)
      abmamba::testing::fd_check_dense(d.a_bar_diag, g.params.a_bar_diag, loss, "a_bar", fd);
    else
      abmamba::testing::fd_check_dense(d.a_bar_dense, g.params.a_bar_dense, loss, "a_bar", fd);
    abmamba::testing::fd_check_dense(d.b_bar, g.params.b_bar, loss, "b_bar", fd);
    abmamba::testing::fd_check_dense(d.c, g.params.c, loss, "c", fd);
    abmamba::testing::fd_check_buffer(&d.d, &g.params.d, 1, loss, "d", fd);

    V wk = random_vec(10, rng);
    auto kloss = [&] { return wk.dot(ssm_kernel(d, 10)); };
    auto gk = ssm_kernel_backward(d, wk);
    auto& fk = results[diagonal ? "kernel (diagonal)" : "kernel (dense)"];
    if (diagonal)
      abmamba::testing::fd_check_dense(d.a_bar_diag, gk.a_bar_diag, kloss, "a_bar", fk);
    else
      abmamba::testing::fd_check_dense(d.a_bar_dense, gk.a_bar_dense, kloss, "a_bar", fk);
    abmamba::testing::fd_check_dense(d.b_bar, gk.b_bar, kloss, "b_bar", fk);
    abmamba::testing::fd_check_dense(d.c, gk.c, kloss, "c", fk);
  }
  {
    V k = random_vec(9, rng), x = random_vec(9, rng), w = random_vec(9, rng);
    double dd = 0.4;
    auto loss = [&] { return w.dot(conv_apply(k, x, dd)); };
    auto g = conv_apply_backward(k, x, dd, w);
    auto& fd = results["convolution"];
    abmamba::testing::fd_check_dense(k, g.kernel, loss, "kernel", fd);
    abmamba::testing::fd_check_dense(x, g.x, loss, "x", fd);
    abmamba::testing::fd_check_buffer(&dd, &g.d, 1, loss, "d", fd);
  }
  {
    V a = -random_vec(4, rng).cwiseAbs() - V::Constant(4, 0.05);
    V b = random_vec(4, rng), c = random_vec(4, rng), wa = random_vec(4, rng), wb = random_vec(4, rng);
    double delta = 0.3;
    auto loss = [&] {
      auto d = discretize_zoh(ContinuousSSM<double>::make_diagonal(a, b, c, 0.1), delta);
      return wa.dot(d.a_bar_diag) + wb.dot(d.b_bar);
    };
    DiscreteSSMGrad<double> up;
    up.a_bar_diag = wa;
    up.b_bar = wb;
    up.c = V::Zero(4);
    auto g = discretize_zoh_backward(ContinuousSSM<double>::make_diagonal(a, b, c, 0.1), delta, up);
    auto& fd = results["discretisation"];
    abmamba::testing::fd_check_dense(a, g.a_diag, loss, "a", fd);
    abmamba::testing::fd_check_dense(b, g.b, loss, "b", fd);
    abmamba::testing::fd_check_buffer(&delta, &g.delta, 1, loss, "delta", fd);
  }
  {
    auto l = random_layer(3, 4, rng);
    M u = random_mat(7, 3, rng), w = random_mat(7, 3, rng);
    auto loss = [&] { return (selective_scan(l, u).array() * w.array()).sum(); };
    SelectiveTape<double> tape;
    selective_scan(l, u, &tape);
    auto g = zeros_like(l);
    M du = selective_scan_backward(l, tape, w, g);
    auto& fd = results["selective scan"];
    fd = abmamba::testing::fd_check_params(l, g, loss);
    abmamba::testing::fd_check_dense(u, du, loss, "u", fd);
  }
  {
    M x = random_mat(5, 6, rng), w = random_mat(5, 6, rng);
    V gain = random_vec(6, rng);
    auto loss = [&] { return (rms_norm(x, gain).array() * w.array()).sum(); };
    RmsTape<double> tape;
    rms_norm(x, gain, &tape);
    V dgain = V::Zero(6);
    M dx = rms_norm_backward(tape, gain, w, dgain);
    auto& fd = results["rms norm"];
    abmamba::testing::fd_check_dense(x, dx, loss, "x", fd);
    abmamba::testing::fd_check_dense(gain, dgain, loss, "gain", fd);
  }
  ModelConfig mc;
  mc.vocab = 8;
  mc.d = 4;
  mc.layers = 2;
  mc.conv_width = 3;
  mc.state_dim = 3;
  {
    auto b = MambaBlockParams<double>::init(mc, rng);
    fill_uniform(b.conv_b, 0.3, rng);
    fill_uniform(b.ssm.w_delta, 0.3, rng);
    fill_uniform(b.w_out, 0.5, rng);
    b.norm.array() += 0.3;
    M x = random_mat(6, 4, rng), w = random_mat(6, 4, rng);
    auto loss = [&] { return (mamba_block(x, b).array() * w.array()).sum(); };
    MambaBlockTape<double> tape;
    mamba_block(x, b, &tape);
    auto g = zeros_like(b);
    M dx = mamba_block_backward(b, tape, w, g);
    auto& fd = results["gated block"];
    fd = abmamba::testing::fd_check_params(b, g, loss);
    abmamba::testing::fd_check_dense(x, dx, loss, "x", fd);
  }
  {
    auto p = ModelParams<double>::init(mc, rng);
    for (auto& b : p.blocks) {
      fill_uniform(b.conv_b, 0.3, rng);
      fill_uniform(b.ssm.b_b, 0.3, rng);
      fill_uniform(b.ssm.w_delta, 0.3, rng);
      fill_uniform(b.w_out, 0.5, rng);
    }
    M prefix = random_mat(3, 4, rng);
    TokenIds ids{1, 5, 2, 7, 0, 3};
    std::vector<int> targets{0, 0, 1, 5, 2, 7, 0, 3, 4};
    std::vector<bool> mask{false, false, true, true, true, true, true, true, false};
    auto loss = [&] { return loss_cross_entropy(lm_forward(prefix, ids, p), targets, mask).loss; };
    LmTape<double> tape;
    auto ce = loss_cross_entropy(lm_forward(prefix, ids, p, &tape), targets, mask);
    auto g = zeros_like(p);
    M dprefix = lm_backward(p, tape, ce.dlogits, g);
    auto& fd = results["language model + loss"];
    fd = abmamba::testing::fd_check_params(p, g, loss);
    abmamba::testing::fd_check_dense(prefix, dprefix, loss, "prefix", fd);
  }
  for (AggregateMode mode : {AggregateMode::Add, AggregateMode::Concat})
    for (bool backward : {true, false}) {
      AhbsConfig cfg;
      cfg.pathways = 2;
      cfg.spatial_pool = 1;
      cfg.d_model = 4;
      cfg.state_dim = 3;
      cfg.aggregate = mode;
      cfg.backward_scan = backward;
      auto p = AhbsParams<double>::init(cfg, 6, rng);
      for (auto* set : {&p.fwd, &p.bwd})
        for (auto& l : *set) fill_uniform(l.b_b, 0.3, rng), fill_uniform(l.w_delta, 0.3, rng);
      FT v = FT::zeros(4, 4, 6);
      fill_uniform(v.data, 1.0, rng);
      AhbsTape<double> tape;
      FT out = ahbs_forward(v, cfg, p, &tape);
      M w = random_mat(out.data.rows(), out.data.cols(), rng);
      auto loss = [&] { return (ahbs_forward(v, cfg, p).data.array() * w.array()).sum(); };
      auto g = zeros_like(p);
      FT dv = ahbs_backward(cfg, p, tape, FT(out.frames, out.tokens, w), g);
      auto& fd = results["projector (" + to_string(mode) + (backward ? ", bidirectional)" : ", forward only)")];
      fd = abmamba::testing::fd_check_params(p, g, loss);
      abmamba::testing::fd_check_dense(v.data, dv.data, loss, "V", fd);
    }
  {
    RunConfig cfg;
    cfg.data.geometry = {4, 16, 16};
    cfg.encoder.d_s = 3;
    cfg.encoder.d_d = 2;
    cfg.ahbs.pathways = 2;
    cfg.ahbs.spatial_pool = 1;
    cfg.ahbs.d_model = cfg.model.d = 4;
    cfg.ahbs.state_dim = cfg.model.state_dim = 2;
    cfg.model.layers = 1;
    cfg.model.conv_width = 2;
    auto ex = prepare_examples<double>(make_dataset(1, 5, cfg.data.geometry), cfg);
    auto p = CaptionerParams<double>::init(cfg, rng);
    auto g = zeros_like(p);
    caption_loss(p, cfg.ahbs, ex[0], &g);
    results["end-to-end captioner"] =
        abmamba::testing::fd_check_params(p, g, [&] { return caption_loss(p, cfg.ahbs, ex[0]); });
  }

  double worst = 0;
  long checked = 0;
  std::string where;
  for (const auto& [name, fd] : results) {
    checked += fd.checked;
    if (fd.max_rel_error >= worst) {
      worst = fd.max_rel_error;
      where = name + ": " + fd.worst;
    }
  }
  return {worst <= 1e-4, std::to_string(results.size()) + " ops, " + std::to_string(checked) +
                             " entries, max rel error " + fmt("%.3g", worst) + " (" + where + ")"};
}

Outcome train_decode_duality() {
  Rng rng(104);
  std::uniform_int_distribution<int> vocab(4, 32), width(2, 24), layers(1, 3), expand(1, 2), conv(1, 4),
      state(1, 16), plen(0, 6);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig mc;
    mc.vocab = vocab(rng);
    mc.d = width(rng);
    mc.layers = layers(rng);
    mc.expand = expand(rng);
    mc.conv_width = conv(rng);
    mc.state_dim = state(rng);
    auto p = ModelParams<float>::init(mc, rng);
    Mat<float> prefix(plen(rng), mc.d);
    fill_uniform(prefix, 1.0, rng);
    GenerateOptions opt;
    opt.max_len = 12;
    std::vector<RowVec<float>> steps;
    const TokenIds out = generate_greedy(prefix, TokenIds{0}, p, opt, &steps);
    TokenIds teacher{0};
    teacher.insert(teacher.end(), out.begin(), out.end() - 1);
    const Mat<float> full = lm_forward(prefix, teacher, p);
    for (std::size_t i = 0; i < steps.size(); ++i)
      worst = std::max(worst, double((full.row(prefix.rows() + Index(i)) - steps[i]).cwiseAbs().maxCoeff()));
  }
  return {worst <= 1e-5, "20 models (32-bit), max |decode - parallel| logit = " + fmt("%.3g", worst)};
}

Outcome reversal_equivariance() {
  Rng rng(105);
  std::uniform_int_distribution<int> frames(1, 12), tokens(1, 6), chans(1, 6);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index t = frames(rng), n = tokens(rng), c = chans(rng);
    auto l = random_layer(c, 4, rng);
    FT v = FT::zeros(t, n, c);
    fill_uniform(v.data, 1.0, rng);
    const FT a = bidirectional_scan(v, l, &l);
    const FT b = bidirectional_scan(FT(t, n, reverse_rows<double>(v.data)), l, &l);
    worst = std::max(worst, (reverse_rows<double>(b.data) - a.data).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-6, "50 inputs, max |f(rev x) - rev f(x)| = " + fmt("%.3g", worst)};
}

Outcome shape_grid() {
  Rng rng(106);
  long cases = 0, bad = 0;
  std::string first_bad;
  for (Index m = 1; m <= 4; ++m)
    for (Index s = 2; s <= 4; ++s)
      for (Index c = 1; c <= 2; ++c)
        for (Index t = 1; t <= 70; ++t) {
          if (t < ipow(s, m - 1)) continue;
          AhbsConfig cfg;
          cfg.pathways = m;
          cfg.stride = s;
          cfg.temporal_compress = c;
          cfg.spatial_pool = 2;
          cfg.d_model = 3;
          cfg.state_dim = 2;
          FT v = FT::zeros(t, 16, 5);
          fill_uniform(v.data, 1.0, rng);
          auto p = AhbsParams<double>::init(cfg, 5, rng);
          const FT out = ahbs_forward(v, cfg, p);
          ++cases;
          if (out.frames != t / c || out.tokens != 4 || out.channels() != 3) {
            if (bad++ == 0)
              first_bad = "T=" + std::to_string(t) + " M=" + std::to_string(m) + " s=" + std::to_string(s);
          }
        }
  const bool lengths = pathway_length(16, 1, 2) == 16 && pathway_length(16, 2, 2) == 8 && pathway_length(16, 3, 2) == 4;
  std::string detail = std::to_string(cases) + " configurations, " + std::to_string(bad) +
                       " wrong shapes; T=16 M=3 s=2 pathway lengths (" + std::to_string(pathway_length(16, 1, 2)) +
                       ", " + std::to_string(pathway_length(16, 2, 2)) + ", " +
                       std::to_string(pathway_length(16, 3, 2)) + ")";
  if (bad) detail += "; first failure " + first_bad;
  return {bad == 0 && lengths, detail};
}

Outcome scaling_law() {
  RunConfig cfg;
  const auto rep = bench_throughput<float>(cfg, 7);
  std::ostringstream csv;
  write_bench_csv(rep, csv);
  std::printf("%s", csv.str().c_str());
  const bool ok = rep.rows.size() == 5 && rep.ssm_slope <= 1.3 && rep.attention_slope >= 1.7 &&
                  rep.decode.ratio() >= 2.0;
  return {ok, "slopes ssm " + fmt("%.3f", rep.ssm_slope) + " (<= 1.3), attention " +
                  fmt("%.3f", rep.attention_slope) + " (>= 1.7); decode at context 4096: ssm " +
                  fmt("%.0f", rep.decode.ssm_tokens_per_s) + " tok/s vs attention " +
                  fmt("%.0f", rep.decode.attention_tokens_per_s) + " tok/s, ratio " +
                  fmt("%.2f", rep.decode.ratio()) + " (>= 2)"};
}

Outcome memory_law() {
  RunConfig cfg;
  const auto rep = bench_memory<float>(cfg);
  const ModelConfig& m = cfg.model;
  const Index closed = m.layers * m.expand * m.d * (m.state_dim + m.conv_width);
  bool counts = true;
  for (const auto& r : rep.rows)
    counts = counts && r.ssm_state_elements == closed && r.attention_cache_elements == 2 * m.d * r.step;
  const auto& first = rep.rows.front();
  const auto& last = rep.rows.back();
  return {counts && rep.closed_form == closed && rep.ssm_constant && rep.attention_linear,
          "ssm state " + std::to_string(first.ssm_state_elements) + " at step 1 and " +
              std::to_string(last.ssm_state_elements) + " at step " + std::to_string(last.step) +
              " (closed form " + std::to_string(closed) + "); attention cache " +
              std::to_string(first.attention_cache_elements) + " -> " +
              std::to_string(last.attention_cache_elements)};
}

// Runs shared by the captioning and ablation criteria.
struct RunRecord {
  EvalReport eval;
  double seconds = 0;
};

const Datasets& default_data() {
  static const Datasets d = make_datasets(RunConfig{});
  return d;
}

const RunRecord& run_variant(const std::string& variant, std::uint64_t seed) {
  static std::map<std::pair<std::string, std::uint64_t>, RunRecord> cache;
  auto key = std::make_pair(variant, seed);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  RunConfig cfg = apply_variant(RunConfig{}, variant);
  cfg.train.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  const auto r = run_experiment<float>(cfg, default_data());
  RunRecord rec{r.eval, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
  std::printf("  %-12s seed %llu: bleu1 %.4f bleu4 %.4f event_bleu1 %.4f (%.0f s)\n", variant.c_str(),
              static_cast<unsigned long long>(seed), rec.eval.bleu1, rec.eval.bleu4, rec.eval.event_bleu1,
              rec.seconds);
  std::fflush(stdout);
  return cache.emplace(key, rec).first->second;
}

Outcome captioning() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto& r = run_variant("full", seed);
    const bool pass = r.eval.bleu1 >= 0.90 && r.eval.bleu4 >= 0.60 && r.seconds < 30 * 60;
    ok = ok && pass;
    detail += (seed ? "; " : "") + std::string("seed ") + std::to_string(seed) + " bleu1 " +
              fmt("%.3f", r.eval.bleu1) + " bleu4 " + fmt("%.3f", r.eval.bleu4) + " in " + fmt("%.0f", r.seconds) +
              " s";
  }
  return {ok, detail + " (need bleu1 >= 0.90, bleu4 >= 0.60, < 1800 s each)"};
}

Outcome ablation() {
  std::map<std::string, double> mean;
  for (const std::string v : {"full", "no-backward", "no-scan"})
    for (std::uint64_t seed = 0; seed < 3; ++seed) mean[v] += run_variant(v, seed).eval.event_bleu1 / 3.0;
  const double gap_b = 100 * (mean["full"] - mean["no-backward"]);
  const double gap_s = 100 * (mean["full"] - mean["no-scan"]);
  return {gap_b >= 5.0 && gap_s >= 10.0,
          "event-clause bleu1 full " + fmt("%.4f", mean["full"]) + ", no-backward " + fmt("%.4f", mean["no-backward"]) +
              " (gap " + fmt("%.2f", gap_b) + " pts, need 5), no-scan " + fmt("%.4f", mean["no-scan"]) + " (gap " +
              fmt("%.2f", gap_s) + " pts, need 10)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "duality", 10, duality},
      {2, "selective-to-lti", 10, selective_to_lti},
      {3, "gradient-suite", 120, gradient_suite},
      {4, "train-decode-duality", 60, train_decode_duality},
      {5, "reversal-equivariance", 10, reversal_equivariance},
      {6, "ahbs-shape-grid", 0, shape_grid},
      {7, "scaling-law", 600, scaling_law},
      {8, "memory-law", 60, memory_law},
      {9, "captioning", 3 * 30 * 60, captioning},
      {10, "ablation-ordering", 0, ablation},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_seconds > 0 && secs >= c.limit_seconds) {
      o.pass = false;
      o.detail += "; exceeded time limit " + fmt("%.0f", c.limit_seconds) + " s";
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
