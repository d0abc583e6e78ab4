#include "abmamba/captioner.hpp"
#include "abmamba/checkpoint.hpp"
#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace abmamba;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.data.geometry = {4, 16, 16};
  cfg.data.patch = 8;
  cfg.encoder.d_s = 3;
  cfg.encoder.d_d = 2;
  cfg.ahbs.pathways = 2;
  cfg.ahbs.spatial_pool = 1;
  cfg.ahbs.d_model = 4;
  cfg.ahbs.state_dim = 2;
  cfg.model.d = 4;
  cfg.model.layers = 1;
  cfg.model.state_dim = 2;
  cfg.model.conv_width = 2;
  return cfg;
}

struct MatVec {
  using Scalar = double;
  Mat<double> w;
  Vec<double> b;
  template <typename F>
  void visit(F&& f, const std::string& prefix = "") {
    f(prefix + "w", w);
    f(prefix + "b", b);
  }
};

struct OneVec {
  using Scalar = double;
  Vec<double> b;
  template <typename F>
  void visit(F&& f, const std::string& prefix = "") {
    f(prefix + "b", b);
  }
};

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("abmamba_" + name)).string();
}

}  // namespace

TEST(Schedule, WarmupThenCosine) {
  EXPECT_DOUBLE_EQ(cosine_schedule(1.0, 0, 100, 10), 0.1);
  EXPECT_DOUBLE_EQ(cosine_schedule(1.0, 9, 100, 10), 1.0);
  EXPECT_DOUBLE_EQ(cosine_schedule(1.0, 10, 100, 10), 1.0);
  EXPECT_NEAR(cosine_schedule(1.0, 55, 100, 10), 0.5, 1e-12);
  EXPECT_NEAR(cosine_schedule(1.0, 100, 100, 10), 0.0, 1e-12);
}

TEST(AdamW, FirstStepMovesBySignedLearningRate) {
  MatVec p{Mat<double>::Ones(2, 2), Vec<double>::Ones(2)};
  MatVec g{(Mat<double>(2, 2) << 0.5, -2, 3, -0.1).finished(), (Vec<double>(2) << 4, -4).finished()};
  AdamW<MatVec> opt(p, {0.1, 0.9, 0.999, 0.0, 0.5});
  opt.step(p, g, 0.1);
  // Matrices decay by (1 - lr * wd) before the update; vectors do not.
  EXPECT_NEAR(p.w(0, 0), 0.95 - 0.1, 1e-12);
  EXPECT_NEAR(p.w(0, 1), 0.95 + 0.1, 1e-12);
  EXPECT_NEAR(p.b(0), 0.9, 1e-12);
  EXPECT_NEAR(p.b(1), 1.1, 1e-12);
}

TEST(AdamW, ClippingScalesTheGradient) {
  OneVec p{Vec<double>::Zero(2)};
  OneVec g{(Vec<double>(2) << 3, 4).finished()};
  AdamW<OneVec> opt(p, {});
  EXPECT_DOUBLE_EQ(opt.step(p, g, 0.1, 1.0), 5.0);
  EXPECT_TRUE(decays("block0.w_in", 4, 4));
  EXPECT_FALSE(decays("ssm.a_log", 4, 4));
  EXPECT_FALSE(decays("proj_b", 4, 1));
}

TEST(Captioner, EndToEndFiniteDifferences) {
  for (bool project_first : {true, false}) {
    RunConfig cfg = tiny_config();
    cfg.ahbs.project_first = project_first;
    auto m = make_dataset(2, 1, cfg.data.geometry);
    auto ex = prepare_examples<double>(m, cfg);
    Rng rng(3);
    auto p = CaptionerParams<double>::init(cfg, rng);
    auto g = zeros_like(p);
    caption_loss(p, cfg.ahbs, ex[0], &g);
    auto fd = abmamba::testing::fd_check_params(p, g, [&] { return caption_loss(p, cfg.ahbs, ex[0]); });
    EXPECT_LE(fd.max_rel_error, 1e-4) << fd.worst;
    EXPECT_GT(fd.checked, 300);
  }
}

TEST(Captioner, OverfitsATinySet) {
  RunConfig cfg = tiny_config();
  cfg.model.d = cfg.ahbs.d_model = 16;
  cfg.train.batch = 4;
  cfg.train.epochs = 40;
  cfg.train.lr = 1e-2;
  auto m = make_dataset(4, 2, cfg.data.geometry);
  auto ex = prepare_examples<double>(m, cfg);
  Rng rng(4);
  auto p = CaptionerParams<double>::init(cfg, rng);
  auto summary = train_captioner(p, cfg, ex);
  ASSERT_EQ(summary.steps.size(), 40u);
  EXPECT_LT(summary.epoch_loss.back(), 0.2 * summary.epoch_loss.front());
}

TEST(Captioner, TrainingIsDeterministic) {
  RunConfig cfg = tiny_config();
  cfg.train.batch = 2;
  cfg.train.epochs = 2;
  auto m = make_dataset(5, 2, cfg.data.geometry);
  auto ex = prepare_examples<double>(m, cfg);
  Rng r1(9), r2(9);
  auto a = CaptionerParams<double>::init(cfg, r1);
  auto b = CaptionerParams<double>::init(cfg, r2);
  train_captioner(a, cfg, ex);
  train_captioner(b, cfg, ex);
  auto ra = tensor_refs(a), rb = tensor_refs(b);
  for (std::size_t k = 0; k < ra.size(); ++k)
    for (Index i = 0; i < ra[k].size(); ++i) ASSERT_EQ(ra[k].data[i], rb[k].data[i]) << ra[k].name;
}

TEST(Captioner, ZeroEpochsLeavesInitialisation) {
  RunConfig cfg = tiny_config();
  cfg.train.epochs = 0;
  auto ex = prepare_examples<double>(make_dataset(3, 2, cfg.data.geometry), cfg);
  Rng r1(5), r2(5);
  auto a = CaptionerParams<double>::init(cfg, r1);
  auto b = CaptionerParams<double>::init(cfg, r2);
  auto s = train_captioner(a, cfg, ex);
  EXPECT_TRUE(s.steps.empty());
  EXPECT_EQ(a.lm.embedding, b.lm.embedding);
}

TEST(Scoring, PerfectAndEventSubset) {
  std::vector<CaptionRecord> recs(2);
  recs[0].candidate = recs[0].reference = "a red square moves right";
  recs[1].reference = "a blue bar moves up then vanishes";
  recs[1].candidate = "a blue bar moves up";
  recs[1].has_event = true;
  auto rep = score_captions(recs);
  EXPECT_DOUBLE_EQ(rep.records[0].bleu4, 1.0);
  EXPECT_EQ(rep.event_count, 1);
  EXPECT_NEAR(rep.event_bleu1, std::exp(1.0 - 7.0 / 5.0), 1e-12);
  EXPECT_NEAR(rep.bleu1, std::exp(1.0 - 12.0 / 10.0), 1e-12);
}

TEST(Checkpoint, RoundTripThroughFloat) {
  RunConfig cfg = tiny_config();
  Rng rng(6);
  auto p = CaptionerParams<double>::init(cfg, rng);
  const auto path = temp_path("ckpt.bin");
  save_checkpoint(p, echo_config(cfg), path);
  Rng other(7);
  auto q = CaptionerParams<double>::init(cfg, other);
  EXPECT_EQ(load_checkpoint(q, path), echo_config(cfg));
  auto rp = tensor_refs(p), rq = tensor_refs(q);
  for (std::size_t k = 0; k < rp.size(); ++k)
    for (Index i = 0; i < rp[k].size(); ++i) EXPECT_EQ(rq[k].data[i], double(float(rp[k].data[i])));

  RunConfig wider = cfg;
  wider.model.d = wider.ahbs.d_model = 8;
  auto w = CaptionerParams<double>::init(wider, other);
  EXPECT_THROW(load_checkpoint(w, path), DataError);
  std::remove(path.c_str());
}

TEST(Checkpoint, RejectsForeignAndTruncatedFiles) {
  const auto path = temp_path("bad.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  EXPECT_THROW(read_checkpoint_file(path), DataError);
  {
    std::ofstream out(path, std::ios::binary);
    out.write("ABMC\x01\x00\x00\x00\xff", 9);
  }
  EXPECT_THROW(read_checkpoint_file(path), DataError);
  std::remove(path.c_str());
  EXPECT_THROW(read_checkpoint_file(temp_path("absent.bin")), DataError);
}
