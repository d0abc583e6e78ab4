#include "abmamba/ahbs.hpp"
#include "gradcheck.hpp"

#include <gtest/gtest.h>

using namespace abmamba;

namespace {

using M = Mat<double>;
using FT = FeatureTensor<double>;

FT random_features(Index t, Index n, Index c, Rng& rng) {
  FT v = FT::zeros(t, n, c);
  fill_uniform(v.data, 1.0, rng);
  return v;
}

// Direct per-token windowed average over an explicit 4-D index space.
FT naive_temporal_pool(const FT& v, Index factor) {
  const Index tm = v.frames / factor;
  FT out = FT::zeros(tm, v.tokens, v.channels());
  for (Index j = 0; j < tm; ++j)
    for (Index n = 0; n < v.tokens; ++n) {
      for (Index t = j * factor; t < (j + 1) * factor; ++t) out.at(j, n) += v.at(t, n);
      out.at(j, n) /= double(factor);
    }
  return out;
}

AhbsConfig tiny_config() {
  AhbsConfig cfg;
  cfg.pathways = 2;
  cfg.stride = 2;
  cfg.spatial_pool = 1;
  cfg.d_model = 4;
  cfg.state_dim = 3;
  return cfg;
}

void randomise(AhbsParams<double>& p, Rng& rng) {
  for (auto& l : p.fwd) {
    fill_uniform(l.b_b, 0.3, rng);
    fill_uniform(l.b_c, 0.3, rng);
    fill_uniform(l.w_delta, 0.3, rng);
  }
  for (auto& l : p.bwd) {
    fill_uniform(l.b_b, 0.3, rng);
    fill_uniform(l.b_c, 0.3, rng);
    fill_uniform(l.w_delta, 0.3, rng);
  }
  fill_uniform(p.proj_b, 0.2, rng);
}

}  // namespace

TEST(Pooling, TemporalPoolMatchesNaiveAverage) {
  Rng rng(1);
  FT v = random_features(7, 3, 2, rng);
  for (Index m = 1; m <= 3; ++m) {
    FT p = temporal_pool(v, m, 2);
    FT ref = naive_temporal_pool(v, pathway_factor(m, 2));
    ASSERT_EQ(p.frames, ref.frames);
    EXPECT_LT((p.data - ref.data).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Pooling, ThreeFramePathwayExample) {
  // T=4, one token, one channel, values 1..4, stride 2.
  FT v(4, 1, (M(4, 1) << 1, 2, 3, 4).finished());
  FT p2 = temporal_pool(v, 2, 2);
  EXPECT_EQ(p2.data, (M(2, 1) << 1.5, 3.5).finished());
  FT p3 = temporal_pool(v, 3, 2);
  EXPECT_EQ(p3.data, (M(1, 1) << 2.5).finished());
  EXPECT_THROW(temporal_pool(v, 4, 2), ConfigError);
}

TEST(Pooling, SpatialBlocksOnSquareGrid) {
  // 4x4 grid, token value equals its index.
  M d(16, 1);
  for (Index i = 0; i < 16; ++i) d(i, 0) = double(i);
  FT v(1, 16, d);
  FT p = spatial_pool(v, 2);
  ASSERT_EQ(p.tokens, 4);
  EXPECT_DOUBLE_EQ(p.data(0, 0), (0 + 1 + 4 + 5) / 4.0);
  EXPECT_DOUBLE_EQ(p.data(1, 0), (2 + 3 + 6 + 7) / 4.0);
  EXPECT_DOUBLE_EQ(p.data(3, 0), (10 + 11 + 14 + 15) / 4.0);
}

TEST(Pooling, NonSquareGridUsesContiguousRuns) {
  auto g = spatial_pool_groups(10, 2);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[1], (std::vector<Index>{4, 5, 6, 7}));
  EXPECT_THROW(spatial_pool_groups(3, 2), ConfigError);
}

TEST(Upsample, RepeatsAndPadsWithLastFrame) {
  FT y(2, 1, (M(2, 1) << 10, 20).finished());
  FT u = temporal_upsample(y, 2, 2, 5);
  EXPECT_EQ(u.data, (M(5, 1) << 10, 10, 20, 20, 20).finished());
  FT dy = temporal_upsample_backward(FT(5, 1, M::Ones(5, 1)), 2, 2, 2);
  EXPECT_EQ(dy.data, (M(2, 1) << 2, 3).finished());
}

TEST(Aggregate, AddAndConcatExamples) {
  std::vector<M> outs{M::Constant(2, 2, 1.0), M::Constant(2, 2, 2.0)};
  EXPECT_EQ(aggregate(outs, AggregateMode::Add), M::Constant(2, 2, 3.0));
  M w(2, 4);
  w << 1, 0, 0, 1, 0, 1, 1, 0;
  M c = aggregate(outs, AggregateMode::Concat, &w);
  EXPECT_EQ(c, M::Constant(2, 2, 3.0));
  EXPECT_THROW(aggregate(outs, AggregateMode::Concat), ConfigError);
  EXPECT_THROW(parse_aggregate_mode("mean"), ConfigError);
}

TEST(Ahbs, OutputShapeGrid) {
  Rng rng(2);
  for (Index m = 1; m <= 4; ++m)
    for (Index s = 2; s <= 4; ++s)
      for (Index c = 1; c <= 2; ++c)
        for (Index t : {1, 2, 3, 5, 8, 9, 16, 27, 64}) {
          AhbsConfig cfg;
          cfg.pathways = m;
          cfg.stride = s;
          cfg.temporal_compress = c;
          cfg.spatial_pool = 2;
          cfg.d_model = 3;
          cfg.state_dim = 2;
          FT v = random_features(t, 16, 5, rng);
          auto p = AhbsParams<double>::init(cfg, 5, rng);
          if (t < ipow(s, m - 1)) {
            EXPECT_THROW(ahbs_forward(v, cfg, p), ConfigError);
            continue;
          }
          FT out = ahbs_forward(v, cfg, p);
          EXPECT_EQ(out.frames, t / c);
          EXPECT_EQ(out.tokens, 4);
          EXPECT_EQ(out.channels(), 3);
        }
}

TEST(Ahbs, PathwayLengthsForDefaultSetting) {
  EXPECT_EQ(pathway_length(16, 1, 2), 16);
  EXPECT_EQ(pathway_length(16, 2, 2), 8);
  EXPECT_EQ(pathway_length(16, 3, 2), 4);
}

TEST(Ahbs, ReversalEquivarianceWithTiedDirections) {
  Rng rng(3);
  AhbsConfig cfg = tiny_config();
  cfg.pathways = 1;
  auto p = AhbsParams<double>::init(cfg, 6, rng);
  randomise(p, rng);
  for (int trial = 0; trial < 10; ++trial) {
    FT v = random_features(6, 4, 4, rng);
    FT a = bidirectional_scan(v, p.fwd[0], &p.fwd[0]);
    FT r(6, 4, reverse_rows<double>(v.data));
    FT b = bidirectional_scan(r, p.fwd[0], &p.fwd[0]);
    EXPECT_LT((reverse_rows<double>(b.data) - a.data).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Ahbs, SinglePathwayCausalIsOneForwardScan) {
  Rng rng(4);
  AhbsConfig cfg = tiny_config();
  cfg.pathways = 1;
  cfg.backward_scan = false;
  auto p = AhbsParams<double>::init(cfg, 6, rng);
  randomise(p, rng);
  FT v = random_features(5, 4, 6, rng);
  FT out = ahbs_forward(v, cfg, p);
  M projected = (v.data * p.proj_w.transpose()).rowwise() + p.proj_b.transpose();
  M ref = selective_scan(p.fwd[0], projected);
  EXPECT_LT((out.data - ref).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Ahbs, NoScanIsProjectorOnly) {
  Rng rng(5);
  AhbsConfig cfg = tiny_config();
  cfg.scan = false;
  auto p = AhbsParams<double>::init(cfg, 6, rng);
  EXPECT_TRUE(p.fwd.empty());
  FT v = random_features(3, 4, 6, rng);
  FT out = ahbs_forward(v, cfg, p);
  M ref = (v.data * p.proj_w.transpose()).rowwise() + p.proj_b.transpose();
  EXPECT_LT((out.data - ref).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Ahbs, WrongInputWidthIsShapeError) {
  Rng rng(6);
  AhbsConfig cfg = tiny_config();
  auto p = AhbsParams<double>::init(cfg, 6, rng);
  EXPECT_THROW(ahbs_forward(random_features(4, 4, 5, rng), cfg, p), ShapeError);
}

TEST(Ahbs, BackwardFiniteDifferencesAcrossVariants) {
  struct Variant {
    AggregateMode mode;
    bool backward, scan, project_first;
    Index compress;
  };
  const std::vector<Variant> variants{
      {AggregateMode::Add, true, true, true, 1},    {AggregateMode::Concat, true, true, true, 2},
      {AggregateMode::Add, false, true, true, 1},   {AggregateMode::Add, true, false, true, 1},
      {AggregateMode::Add, true, true, false, 2},   {AggregateMode::Concat, true, true, false, 1},
  };
  Rng rng(7);
  for (const auto& var : variants) {
    AhbsConfig cfg = tiny_config();
    cfg.aggregate = var.mode;
    cfg.backward_scan = var.backward;
    cfg.scan = var.scan;
    cfg.project_first = var.project_first;
    cfg.temporal_compress = var.compress;
    auto p = AhbsParams<double>::init(cfg, 6, rng);
    randomise(p, rng);
    FT v = random_features(4, 4, 6, rng);
    AhbsTape<double> tape;
    FT out = ahbs_forward(v, cfg, p, &tape);
    M w(out.data.rows(), out.data.cols());
    fill_uniform(w, 1.0, rng);
    auto loss = [&] { return (ahbs_forward(v, cfg, p).data.array() * w.array()).sum(); };
    auto g = zeros_like(p);
    FT dv = ahbs_backward(cfg, p, tape, FT(out.frames, out.tokens, w), g);
    auto fd = abmamba::testing::fd_check_params(p, g, loss);
    abmamba::testing::fd_check_dense(v.data, dv.data, loss, "V", fd);
    EXPECT_LE(fd.max_rel_error, 1e-4) << to_string(var.mode) << " bwd=" << var.backward
                                      << " scan=" << var.scan << " pf=" << var.project_first
                                      << ": " << fd.worst;
  }
}
