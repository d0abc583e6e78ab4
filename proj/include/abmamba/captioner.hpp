#pragma once

// Video captioner: AHBS projector feeding a selective-SSM language model through
// a visual prefix [IMG; H_v], trained with teacher-forced cross-entropy on the
// caption tokens.

#include "abmamba/ahbs.hpp"
#include "abmamba/config.hpp"
#include "abmamba/metrics.hpp"
#include "abmamba/model.hpp"
#include "abmamba/optim.hpp"
#include "abmamba/synthdata.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace abmamba {

template <typename S>
struct CaptionerParams {
  using Scalar = S;
  AhbsParams<S> ahbs;
  ModelParams<S> lm;

  template <typename F>
  void visit(F&& f, const std::string& prefix = "") {
    ahbs.visit(f, prefix + "ahbs.");
    lm.visit(f, prefix + "lm.");
  }

  static CaptionerParams init(const RunConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelConfig mc = cfg.model;
    mc.vocab = Vocabulary().size();
    CaptionerParams p;
    p.ahbs = AhbsParams<S>::init(cfg.ahbs, cfg.encoder.d_s + cfg.encoder.d_d, rng);
    p.lm = ModelParams<S>::init(mc, rng);
    return p;
  }
};

template <typename S>
struct CaptionExample {
  FeatureTensor<S> video;
  TokenIds words;  // caption word ids, no specials
  std::string caption;
  bool has_event = false;
};

template <typename S>
FeatureTensor<S> video_features(const Scene& s, const FrameGeometry& g, const EncoderPair& enc) {
  const Mat<double> v = encode_video(render_frames(s, g), enc);
  return FeatureTensor<S>(g.frames, v.rows() / g.frames, v.template cast<S>());
}

template <typename S>
std::vector<CaptionExample<S>> prepare_examples(const Manifest& m, const RunConfig& cfg) {
  const auto enc = EncoderPair::create(cfg.data.patch, cfg.encoder.d_s, cfg.encoder.d_d);
  const Vocabulary vocab;
  std::vector<CaptionExample<S>> out;
  out.reserve(m.scenes.size());
  for (std::size_t i = 0; i < m.scenes.size(); ++i)
    out.push_back({video_features<S>(m.scenes[i], m.geometry, enc), vocab.encode(m.captions[i]),
                   m.captions[i], m.scenes[i].event != Event::None});
  return out;
}

// Prefix rows: the IMG marker embedding followed by the projected video tokens.
template <typename S>
Mat<S> visual_prefix(const ModelParams<S>& lm, const FeatureTensor<S>& hv) {
  Mat<S> prefix(hv.data.rows() + 1, lm.width());
  prefix.row(0) = lm.embedding.row(Vocabulary::kImg);
  prefix.bottomRows(hv.data.rows()) = hv.data;
  return prefix;
}

// Teacher-forced loss on one example; accumulates `scale` * gradient into `g`.
template <typename S>
double caption_loss(const CaptionerParams<S>& p, const AhbsConfig& acfg, const CaptionExample<S>& ex,
                    CaptionerParams<S>* g = nullptr, double scale = 1.0) {
  AhbsTape<S> atape;
  const FeatureTensor<S> hv = ahbs_forward(ex.video, acfg, p.ahbs, g ? &atape : nullptr);
  const Mat<S> prefix = visual_prefix(p.lm, hv);
  TokenIds ids{Vocabulary::kBos};
  ids.insert(ids.end(), ex.words.begin(), ex.words.end());
  const Index lp = prefix.rows(), len = lp + Index(ids.size());
  std::vector<int> targets(std::size_t(len), 0);
  std::vector<bool> mask(std::size_t(len), false);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto row = std::size_t(lp) + i;
    targets[row] = i + 1 < ids.size() ? ids[i + 1] : Vocabulary::kEos;
    mask[row] = true;
  }
  LmTape<S> tape;
  const Mat<S> logits = lm_forward(prefix, ids, p.lm, g ? &tape : nullptr);
  auto ce = loss_cross_entropy(logits, targets, mask);
  if (g) {
    ce.dlogits *= S(scale);
    const Mat<S> dprefix = lm_backward(p.lm, tape, ce.dlogits, g->lm);
    g->lm.embedding.row(Vocabulary::kImg) += dprefix.row(0);
    ahbs_backward(acfg, p.ahbs, atape, FeatureTensor<S>(hv.frames, hv.tokens, dprefix.bottomRows(lp - 1)),
                  g->ahbs);
  }
  return double(ce.loss);
}

template <typename S>
TokenIds caption_generate(const CaptionerParams<S>& p, const AhbsConfig& acfg,
                          const FeatureTensor<S>& video, Index max_len) {
  const FeatureTensor<S> hv = ahbs_forward(video, acfg, p.ahbs);
  GenerateOptions opt;
  opt.max_len = max_len;
  opt.eos_id = Vocabulary::kEos;
  return generate_greedy(visual_prefix(p.lm, hv), TokenIds{Vocabulary::kBos}, p.lm, opt);
}

struct TrainStep {
  long step = 0;
  long epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

struct TrainSummary {
  std::vector<TrainStep> steps;
  std::vector<double> epoch_loss;
  double seconds = 0.0;
};

template <typename S>
TrainSummary train_captioner(CaptionerParams<S>& params, const RunConfig& cfg,
                             const std::vector<CaptionExample<S>>& data,
                             const std::function<void(const TrainStep&)>& on_step = {}) {
  if (data.empty()) throw DataError("train_captioner: no training examples");
  const auto start = std::chrono::steady_clock::now();
  const TrainConfig& tc = cfg.train;
  const long n = long(data.size());
  const long per_epoch = (n + tc.batch - 1) / tc.batch;
  const long total = per_epoch * tc.epochs;
  const long warmup = long(std::ceil(tc.warmup_ratio * double(total)));
  AdamW<CaptionerParams<S>> opt(params, {tc.lr, 0.9, 0.999, 1e-8, tc.weight_decay});
  Rng rng(mix_seed(tc.seed, 0x7a11));
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  CaptionerParams<S> grads = zeros_like(params);
  TrainSummary summary;
  long step = 0;
  for (long epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (long b = 0; b < per_epoch; ++b) {
      const long lo = b * tc.batch, hi = std::min(n, lo + long(tc.batch));
      grads.visit([](const std::string&, auto& t) { t.setZero(); });
      double loss = 0.0;
      for (long i = lo; i < hi; ++i)
        loss += caption_loss(params, cfg.ahbs, data[std::size_t(order[std::size_t(i)])], &grads,
                             1.0 / double(hi - lo));
      loss /= double(hi - lo);
      epoch_sum += loss * double(hi - lo);
      const double lr = cosine_schedule(tc.lr, step, total, warmup);
      const double norm = opt.step(params, grads, lr, tc.grad_clip);
      TrainStep rec{step, epoch, loss, lr, norm};
      summary.steps.push_back(rec);
      if (on_step) on_step(rec);
      ++step;
    }
    summary.epoch_loss.push_back(epoch_sum / double(n));
  }
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return summary;
}

struct CaptionRecord {
  std::string candidate;
  std::string reference;
  double bleu1 = 0, bleu4 = 0, rouge_l = 0;
  bool has_event = false;
};

struct EvalReport {
  std::vector<CaptionRecord> records;
  double bleu1 = 0, bleu4 = 0, rouge_l = 0;  // corpus BLEU, mean ROUGE-L
  double event_bleu1 = 0, event_bleu4 = 0;   // restricted to captions with an event clause
  Index event_count = 0;
};

EvalReport score_captions(std::vector<CaptionRecord> records);

template <typename S>
EvalReport evaluate_captioner(const CaptionerParams<S>& p, const RunConfig& cfg,
                              const std::vector<CaptionExample<S>>& data) {
  const Vocabulary vocab;
  std::vector<CaptionRecord> recs;
  for (const auto& ex : data) {
    CaptionRecord r;
    r.candidate = vocab.decode(caption_generate(p, cfg.ahbs, ex.video, cfg.eval_max_len));
    r.reference = ex.caption;
    r.has_event = ex.has_event;
    recs.push_back(std::move(r));
  }
  return score_captions(std::move(recs));
}

}  // namespace abmamba
