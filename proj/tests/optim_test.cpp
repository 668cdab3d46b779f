#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "unifex/error.hpp"
#include "unifex/optim.hpp"
#include "unifex/retrieval.hpp"

namespace unifex {
namespace {

TEST(ScheduleTest, CosineEndpointsAndMidpoint) {
  EXPECT_DOUBLE_EQ(cosine_lr(0.0, 1e-2, 1e-3), 1e-2);
  EXPECT_NEAR(cosine_lr(1.0, 1e-2, 1e-3), 1e-3, 1e-15);
  EXPECT_NEAR(cosine_lr(0.5, 1e-2, 1e-3), 5.5e-3, 1e-15);
}

TEST(ScheduleTest, WarmupThenCosine) {
  TrainerConfig cfg;
  const std::size_t spe = 4;  // 10 epochs -> steps 0..39, warmup 0..3
  EXPECT_NEAR(lr_at(0, spe, cfg), 2.5e-3, 1e-15);
  EXPECT_NEAR(lr_at(1, spe, cfg), 5e-3, 1e-15);
  EXPECT_NEAR(lr_at(3, spe, cfg), 1e-2, 1e-12);
  EXPECT_NEAR(lr_at(39, spe, cfg), 1e-3, 1e-12);
  // Both sides of the boundary stay close to lr.
  EXPECT_NEAR(lr_at(4, spe, cfg), cosine_lr(1.0 / 36.0, 1e-2, 1e-3), 1e-15);
  double previous = lr_at(3, spe, cfg);
  for (std::size_t s = 4; s < 40; ++s) {
    const double v = lr_at(s, spe, cfg);
    EXPECT_LE(v, previous);
    EXPECT_GE(v, 1e-3 - 1e-15);
    previous = v;
  }
}

TEST(ScheduleTest, NoWarmup) {
  TrainerConfig cfg;
  cfg.warmup_epochs = 0;
  EXPECT_DOUBLE_EQ(lr_at(0, 5, cfg), 1e-2);
  EXPECT_NEAR(lr_at(49, 5, cfg), 1e-3, 1e-12);
}

TEST(TrainerConfigTest, Validation) {
  TrainerConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.epochs = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lr_min = 0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(AdamTest, FirstStepMovesByLearningRateTimesSign) {
  TrainerConfig cfg;
  cfg.weight_decay = 0.0;
  std::vector<double> p = {1.0, -2.0, 0.5};
  const std::vector<double> g = {0.3, -4.0, 1e-3};
  AdamState state;
  const ParamRef refs[] = {{p, g}};
  adam_step(refs, state, 0.1, cfg);
  EXPECT_NEAR(p[0], 0.9, 1e-6);
  EXPECT_NEAR(p[1], -1.9, 1e-6);
  EXPECT_NEAR(p[2], 0.4, 1e-4);
  EXPECT_EQ(state.step, 1);
}

TEST(AdamTest, MatchesReferenceRecurrence) {
  TrainerConfig cfg;
  cfg.weight_decay = 0.01;
  std::vector<double> p = {0.7};
  double m = 0.0, v = 0.0, ref = 0.7;
  AdamState state;
  for (int t = 1; t <= 5; ++t) {
    const double grad = 0.2 * t - 0.5;
    const std::vector<double> g = {grad};
    const ParamRef refs[] = {{p, g}};
    adam_step(refs, state, 0.05, cfg);
    const double gt = grad + 0.01 * ref;
    m = 0.9 * m + 0.1 * gt;
    v = 0.999 * v + 0.001 * gt * gt;
    ref -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p[0], ref, 1e-14) << "t=" << t;
  }
}

TEST(AdamTest, NonFiniteGradientLeavesStateUntouched) {
  TrainerConfig cfg;
  std::vector<double> p = {1.0, 2.0};
  const std::vector<double> g = {0.1, INFINITY};
  AdamState state;
  const ParamRef refs[] = {{p, g}};
  EXPECT_THROW(adam_step(refs, state, 0.1, cfg), NumericError);
  EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(state.step, 0);
}

struct SmallProblem {
  testing::ClusterBenchmark data;
  ProbeModel model;
  TrainerConfig cfg;
};

SmallProblem small_problem(LossVariant variant = LossVariant::ArcFace) {
  testing::ClusterBenchmarkConfig bc;
  bc.classes = 8;
  bc.dim = 64;
  bc.train_per_class = 13;
  bc.min_angle_deg = 40.0;
  SmallProblem p{testing::make_cluster_benchmark(bc), {}, {}};
  LossConfig loss;
  loss.variant = variant;
  p.model = ProbeModel::init(64, 8, loss, 0.1, 1);
  p.cfg.epochs = 4;
  p.cfg.batch_size = 16;  // 104 samples -> last batch of 8
  p.cfg.seed = 5;
  return p;
}

TEST(TrainProbeTest, DeterministicAndKeepsLastPartialBatch) {
  const auto p = small_problem();
  const auto a = train_probe(p.data.train, p.data.train_manifest, p.model, p.cfg);
  const auto b = train_probe(p.data.train, p.data.train_manifest, p.model, p.cfg);
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.history.size(), 4u);
  EXPECT_EQ(a.history.back().samples_seen, 4u * 104u);
  EXPECT_EQ(a.model.step, 4 * 7);
  EXPECT_EQ(a.best_epoch, 4u);
  for (std::size_t e = 0; e < 4; ++e) EXPECT_EQ(a.history[e].mean_loss, b.history[e].mean_loss);

  auto other = p.cfg;
  other.seed = 6;
  EXPECT_NE(train_probe(p.data.train, p.data.train_manifest, p.model, other).model, a.model);
}

TEST(TrainProbeTest, LossDecreases) {
  auto p = small_problem();
  p.cfg.epochs = 8;
  const auto r = train_probe(p.data.train, p.data.train_manifest, p.model, p.cfg);
  EXPECT_LT(r.history.back().mean_loss, 0.5 * r.history.front().mean_loss);
}

TEST(TrainProbeTest, EveryVariantTrainsWithoutError) {
  for (const auto v : kAllLossVariants) {
    auto p = small_problem(v);
    if (v == LossVariant::SubCenterArcFace) {
      p.model.loss.k = 2;
      p.model = ProbeModel::init(64, 8, p.model.loss, 0.1, 1);
    }
    const auto r = train_probe(p.data.train, p.data.train_manifest, p.model, p.cfg);
    EXPECT_TRUE(std::isfinite(r.history.back().mean_loss)) << to_string(v);
    EXPECT_LT(r.history.back().mean_loss, r.history.front().mean_loss) << to_string(v);
  }
}

TEST(TrainProbeTest, EvalHookSelectsBestEpoch) {
  const auto p = small_problem();
  std::vector<ProbeModel> snapshots;
  const std::vector<double> scores = {0.2, 0.9, 0.5, 0.9};
  const auto r = train_probe(p.data.train, p.data.train_manifest, p.model, p.cfg, [&](const ProbeModel& m) {
    snapshots.push_back(m);
    return scores[snapshots.size() - 1];
  });
  EXPECT_EQ(r.best_epoch, 2u);  // first of the tied maxima
  EXPECT_EQ(r.model, snapshots[1]);
  EXPECT_EQ(r.history[1].eval_metric, 0.9);
}

TEST(TrainProbeTest, MaxSeenSamplesStopsMidEpoch) {
  auto p = small_problem();
  p.cfg.max_seen_samples = 150;
  const auto r = train_probe(p.data.train, p.data.train_manifest, p.model, p.cfg);
  ASSERT_EQ(r.history.size(), 2u);
  EXPECT_EQ(r.history.back().samples_seen, 150u);
}

TEST(TrainProbeTest, ZeroLearningRateLeavesParametersAndLossUnchanged) {
  auto p = small_problem();
  p.model.dropout_rate = 0.0;
  p.cfg.lr = 0.0;
  p.cfg.lr_min = 0.0;
  const auto r = train_probe(p.data.train, p.data.train_manifest, p.model, p.cfg);
  EXPECT_EQ(r.model.w_proj, p.model.w_proj);
  EXPECT_EQ(r.model.b_proj, p.model.b_proj);
  EXPECT_EQ(r.model.classifier, p.model.classifier);
  for (const auto& rec : r.history) EXPECT_NEAR(rec.mean_loss, r.history.front().mean_loss, 1e-12);
}

TEST(TrainProbeTest, SmallAdamStepLowersBatchLoss) {
  auto p = small_problem();
  p.model.dropout_rate = 0.0;
  const MatrixD x = p.data.train.to_double();
  const auto targets = p.data.train_manifest.class_ids();
  const auto state = LossState::initial(p.model.loss, 8);
  const auto batch_loss = [&](const ProbeModel& m) {
    return loss_value(m.loss, project(m, x, ProjectMode::Eval, 0).y, m.classifier, targets, state);
  };
  const auto proj = project(p.model, x, ProjectMode::Eval, 0);
  const auto lg = loss_and_grad(p.model.loss, proj.y, p.model.classifier, targets, state);
  const auto pg = probe_backward(p.model, x, lg.d_x, {});
  ProbeModel next = p.model;
  const ParamRef params[] = {
      {next.w_proj.values(), pg.d_w_proj.values()},
      {next.b_proj, pg.d_b_proj},
      {next.classifier.rows().values(), lg.d_weights.values()},
  };
  AdamState adam;
  adam_step(params, adam, 1e-5, p.cfg);
  EXPECT_LT(batch_loss(next), batch_loss(p.model));
}

TEST(TrainProbeTest, RejectsSparseClassIds) {
  auto p = small_problem();
  auto manifest = p.data.train_manifest;
  for (auto& rec : manifest.records) {
    if (rec.class_id == 3) rec.class_id = 7;
  }
  EXPECT_THROW(train_probe(p.data.train, manifest, p.model, p.cfg), ConfigError);
  EXPECT_THROW(train_probe(p.data.queries, p.data.train_manifest, p.model, p.cfg), ShapeError);
}

}  // namespace
}  // namespace unifex
