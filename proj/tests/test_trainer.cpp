// Copyright 2026 The ffuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ffuse/synth.hpp"
#include "ffuse/trainer.hpp"
#include "oracle_values.hpp"
#include "test_util.hpp"

namespace ffuse {
namespace {

using testing::BitEqual;
using testing::FailsWith;
using testing::MatrixNear;
using testing::RandomMatrix;

TEST(LrSchedule, WarmupAndDecay) {
  TrainConfig cfg;
  cfg.learning_rate = 0.002;
  cfg.warmup_steps = 100;
  EXPECT_EQ(LrSchedule(100, cfg), 0.002);
  EXPECT_DOUBLE_EQ(LrSchedule(50, cfg), 0.001);
  EXPECT_DOUBLE_EQ(LrSchedule(400, cfg), 0.001);
  EXPECT_DOUBLE_EQ(LrSchedule(1, cfg), 0.002 / 100);
  EXPECT_DOUBLE_EQ(LrSchedule(0, cfg), 0.002 / 100);
  EXPECT_DOUBLE_EQ(LrSchedule(2500, cfg), 0.002 * std::sqrt(100.0 / 2500.0));
  for (std::int64_t s = 1; s < 100; ++s) EXPECT_LT(LrSchedule(s, cfg), LrSchedule(s + 1, cfg));
  for (std::int64_t s = 100; s < 1000; ++s) EXPECT_GT(LrSchedule(s, cfg), LrSchedule(s + 1, cfg));
  cfg.warmup_steps = 0;
  EXPECT_EQ(LrSchedule(0, cfg), 0.002);
  EXPECT_EQ(LrSchedule(12345, cfg), 0.002);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  EXPECT_EQ(cfg.optimizer, OptimizerKind::kAdam);
  cfg.steps = 0;
  EXPECT_TRUE(FailsWith([&] { cfg.Validate(); }, ErrorKind::kInvalidArgument, "steps"));
  cfg = TrainConfig{};
  cfg.learning_rate = 0;
  EXPECT_TRUE(FailsWith([&] { cfg.Validate(); }, ErrorKind::kInvalidArgument, "learning rate"));
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_TRUE(FailsWith([&] { cfg.Validate(); }, ErrorKind::kInvalidArgument, "batch"));
  cfg = TrainConfig{};
  cfg.task_weight = -1;
  EXPECT_TRUE(FailsWith([&] { cfg.Validate(); }, ErrorKind::kInvalidArgument, "task weight"));
  EXPECT_EQ(ParseOptimizer("sgd"), OptimizerKind::kSgd);
  EXPECT_EQ(ParseOptimizer(ToString(OptimizerKind::kAdam)), OptimizerKind::kAdam);
  EXPECT_TRUE(FailsWith([] { ParseOptimizer("rmsprop"); }, ErrorKind::kInvalidArgument));
}

// Fixed two-example problem shared with the autodiff reference.
struct ReferenceProblem {
  std::vector<TrainExample> data;
  FusionModel model;

  explicit ReferenceProblem(FusionMethod method)
      : model(MakeFusionModel(Config(method), 3, 2, 0)) {
    data.push_back({FeatureMatrix(FFUSE_ORACLE(oracle::kTrU0), 20),
                    FeatureMatrix(FFUSE_ORACLE(oracle::kTrV0), 20), FFUSE_ORACLE(oracle::kTrY0)});
    data.push_back({FeatureMatrix(FFUSE_ORACLE(oracle::kTrU1), 20),
                    FeatureMatrix(FFUSE_ORACLE(oracle::kTrV1), 20), FFUSE_ORACLE(oracle::kTrY1)});
    model.proj_u->weight = FFUSE_ORACLE(oracle::kTrInit_wu);
    model.proj_u->bias = FFUSE_ORACLE(oracle::kTrInit_bu).row(0);
    model.proj_v->weight = FFUSE_ORACLE(oracle::kTrInit_wv);
    model.proj_v->bias = FFUSE_ORACLE(oracle::kTrInit_bv).row(0);
    model.output.weight = method == FusionMethod::kLinearProjection
                              ? FFUSE_ORACLE(oracle::kTrInit_wo_lp)
                              : FFUSE_ORACLE(oracle::kTrInit_wo_ws);
    model.output.bias = FFUSE_ORACLE(oracle::kTrInit_bo).row(0);
    model.gate.alpha = 0.6;
    model.gate.beta = 0.3;
  }

  static FusionConfig Config(FusionMethod method) {
    FusionConfig cfg;
    cfg.method = method;
    cfg.common_dim = 2;
    cfg.output_dim = 3;
    cfg.epsilon = 0.1;
    cfg.lambda = 0.5;
    return cfg;
  }

  static TrainConfig Train(OptimizerKind opt, std::int64_t steps, double lr, std::int64_t warmup) {
    TrainConfig cfg;
    cfg.optimizer = opt;
    cfg.steps = steps;
    cfg.learning_rate = lr;
    cfg.warmup_steps = warmup;
    cfg.batch_size = 2;
    cfg.task_weight = 0.7;
    return cfg;
  }
};

Matrix Row(const RowVector& r) { return r; }

TEST(Train, SgdStepMatchesAutodiffLinearProjection) {
  ReferenceProblem p(FusionMethod::kLinearProjection);
  const TrainReport r = Train(p.model, p.data, ReferenceProblem::Train(OptimizerKind::kSgd, 1, 0.05, 0));
  EXPECT_NEAR(r.history[0].loss.total, oracle::kSgdLpLoss0, 1e-12);
  EXPECT_TRUE(MatrixNear(r.model.proj_u->weight, FFUSE_ORACLE(oracle::kSgdLp_wu), 1e-12));
  EXPECT_TRUE(MatrixNear(Row(r.model.proj_u->bias), FFUSE_ORACLE(oracle::kSgdLp_bu), 1e-12));
  EXPECT_TRUE(MatrixNear(r.model.proj_v->weight, FFUSE_ORACLE(oracle::kSgdLp_wv), 1e-12));
  EXPECT_TRUE(MatrixNear(Row(r.model.proj_v->bias), FFUSE_ORACLE(oracle::kSgdLp_bv), 1e-12));
  EXPECT_TRUE(MatrixNear(r.model.output.weight, FFUSE_ORACLE(oracle::kSgdLp_wo), 1e-12));
  EXPECT_TRUE(MatrixNear(Row(r.model.output.bias), FFUSE_ORACLE(oracle::kSgdLp_bo), 1e-12));
}

TEST(Train, SgdStepMatchesAutodiffWeightedSum) {
  ReferenceProblem p(FusionMethod::kWeightedSum);
  const TrainReport r = Train(p.model, p.data, ReferenceProblem::Train(OptimizerKind::kSgd, 1, 0.05, 0));
  EXPECT_NEAR(r.history[0].loss.total, oracle::kSgdWsLoss0, 1e-12);
  EXPECT_TRUE(MatrixNear(r.model.proj_u->weight, FFUSE_ORACLE(oracle::kSgdWs_wu), 1e-12));
  EXPECT_TRUE(MatrixNear(r.model.proj_v->weight, FFUSE_ORACLE(oracle::kSgdWs_wv), 1e-12));
  EXPECT_TRUE(MatrixNear(r.model.output.weight, FFUSE_ORACLE(oracle::kSgdWs_wo), 1e-12));
  EXPECT_TRUE(MatrixNear(Row(r.model.output.bias), FFUSE_ORACLE(oracle::kSgdWs_bo), 1e-12));
  EXPECT_NEAR(r.model.gate.alpha, oracle::kSgdWs_alpha, 1e-12);
  EXPECT_NEAR(r.model.gate.beta, oracle::kSgdWs_beta, 1e-12);
}

TEST(Train, AdamWithWarmupMatchesReference) {
  for (FusionMethod method : {FusionMethod::kLinearProjection, FusionMethod::kWeightedSum}) {
    ReferenceProblem p(method);
    const TrainReport r = Train(p.model, p.data, ReferenceProblem::Train(OptimizerKind::kAdam, 3, 0.01, 2));
    const bool lp = method == FusionMethod::kLinearProjection;
    const double* losses = lp ? oracle::kAdamLpLosses : oracle::kAdamWsLosses;
    ASSERT_EQ(r.history.size(), 3u);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.history[i].loss.total, losses[i], 1e-11) << i;
    EXPECT_DOUBLE_EQ(r.history[0].lr, 0.005);
    EXPECT_DOUBLE_EQ(r.history[1].lr, 0.01);
    EXPECT_DOUBLE_EQ(r.history[2].lr, 0.01 * std::sqrt(2.0 / 3.0));
    if (lp) {
      EXPECT_TRUE(MatrixNear(r.model.proj_u->weight, FFUSE_ORACLE(oracle::kAdamLp_wu), 1e-11));
      EXPECT_TRUE(MatrixNear(r.model.proj_v->weight, FFUSE_ORACLE(oracle::kAdamLp_wv), 1e-11));
      EXPECT_TRUE(MatrixNear(r.model.output.weight, FFUSE_ORACLE(oracle::kAdamLp_wo), 1e-11));
    } else {
      EXPECT_TRUE(MatrixNear(r.model.proj_u->weight, FFUSE_ORACLE(oracle::kAdamWs_wu), 1e-11));
      EXPECT_TRUE(MatrixNear(r.model.output.weight, FFUSE_ORACLE(oracle::kAdamWs_wo), 1e-11));
      EXPECT_NEAR(r.model.gate.alpha, oracle::kAdamWs_alpha, 1e-11);
      EXPECT_NEAR(r.model.gate.beta, oracle::kAdamWs_beta, 1e-11);
    }
  }
}

TEST(Train, EvaluateObjectiveMatchesFirstStep) {
  ReferenceProblem p(FusionMethod::kWeightedSum);
  std::vector<const TrainExample*> batch{&p.data[0], &p.data[1]};
  const LossBreakdown b = EvaluateObjective(p.model, batch, 0.7);
  EXPECT_NEAR(b.total, oracle::kSgdWsLoss0, 1e-12);
  EXPECT_NEAR(b.total, b.task_loss + 0.5 * b.refine_loss, 1e-12);
}

std::vector<TrainExample> SynthData(std::ptrdiff_t frames, std::ptrdiff_t k, std::uint64_t seed,
                                    std::ptrdiff_t out_dim = 0) {
  SynthSpec spec;
  spec.frames = frames;
  spec.k1 = spec.k2 = spec.paired_dims = k;
  spec.seed = seed;
  auto [u, v] = GeneratePair(spec);
  Matrix target = out_dim > 0 ? RandomMatrix(frames, out_dim, static_cast<unsigned>(seed)) : Matrix();
  return {TrainExample{u, v, target}};
}

TEST(Train, TaskWeightZeroLeavesOutputUntouched) {
  auto data = SynthData(500, 8, 1);
  for (FusionMethod method : {FusionMethod::kLinearProjection, FusionMethod::kWeightedSum}) {
    FusionConfig fcfg;
    fcfg.method = method;
    fcfg.common_dim = 4;
    fcfg.output_dim = 5;
    TrainConfig tcfg;
    tcfg.steps = 200;
    tcfg.task_weight = 0.0;
    const FusionModel init = MakeFusionModel(fcfg, 8, 8, tcfg.seed);
    int observed = 0;
    const TrainReport r = Train(data, fcfg, tcfg, [&](const StepAudit& a) {
      ++observed;
      EXPECT_TRUE(a.model.output.grad.weight.isZero(0.0));
      EXPECT_TRUE(a.model.output.grad.bias.isZero(0.0));
      EXPECT_EQ(a.model.gate.grad_alpha, 0.0);
      EXPECT_EQ(a.model.gate.grad_beta, 0.0);
    });
    EXPECT_EQ(observed, 200);
    EXPECT_TRUE(BitEqual(r.model.output.weight, init.output.weight));
    EXPECT_TRUE(BitEqual(Row(r.model.output.bias), Row(init.output.bias)));
    EXPECT_EQ(r.model.gate.alpha, init.gate.alpha);
    EXPECT_FALSE(BitEqual(r.model.proj_u->weight, init.proj_u->weight));
  }
}

TEST(Train, LambdaZeroMatchesInactiveRefinement) {
  auto data = SynthData(200, 4, 2, 3);
  FusionConfig a;
  a.common_dim = 3;
  a.output_dim = 3;
  a.lambda = 0.0;
  FusionConfig b = a;
  b.lambda = 0.3;
  b.epsilon = 1.0;  // every entry masked, so the refine gradient is exactly zero
  TrainConfig t;
  t.steps = 50;
  const TrainReport ra = Train(data, a, t);
  const TrainReport rb = Train(data, b, t);
  EXPECT_TRUE(BitEqual(ra.model.proj_u->weight, rb.model.proj_u->weight));
  EXPECT_TRUE(BitEqual(ra.model.proj_v->weight, rb.model.proj_v->weight));
  EXPECT_TRUE(BitEqual(ra.model.output.weight, rb.model.output.weight));
}

TEST(Train, TaskLossNonIncreasingUnderSmallSgd) {
  auto data = SynthData(100, 4, 3, 2);
  FusionConfig f;
  f.common_dim = 3;
  f.output_dim = 2;
  f.lambda = 0.0;
  TrainConfig t;
  t.optimizer = OptimizerKind::kSgd;
  t.learning_rate = 0.01;
  t.warmup_steps = 0;
  t.steps = 300;
  const TrainReport r = Train(data, f, t);
  for (std::size_t i = 1; i < r.history.size(); ++i) {
    EXPECT_LE(r.history[i].loss.task_loss, r.history[i - 1].loss.task_loss) << i;
  }
  EXPECT_LT(r.history.back().loss.task_loss, r.history.front().loss.task_loss);
}

TEST(Train, DeterministicHistories) {
  auto data = SynthData(300, 6, 4, 4);
  FusionConfig f;
  f.method = FusionMethod::kWeightedSum;
  f.common_dim = 4;
  f.output_dim = 4;
  TrainConfig t;
  t.steps = 100;
  t.seed = 17;
  const TrainReport a = Train(data, f, t);
  const TrainReport b = Train(data, f, t);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].loss.total, b.history[i].loss.total);
    EXPECT_EQ(a.history[i].max_abs_corr, b.history[i].max_abs_corr);
  }
  EXPECT_TRUE(BitEqual(a.model.proj_u->weight, b.model.proj_u->weight));
  EXPECT_TRUE(BitEqual(a.final_corr.data(), b.final_corr.data()));
}

TEST(Train, TwoSeedsBothDecorrelate) {
  auto data = SynthData(2000, 16, 5);
  FusionConfig f;
  f.common_dim = 8;
  f.lambda = 0.3;
  f.epsilon = 0.2;
  TrainConfig t;
  t.task_weight = 0.0;
  t.init = InitMode::kMirrored;
  std::vector<TrainReport> reports;
  for (std::uint64_t seed : {1u, 2u}) {
    t.seed = seed;
    reports.push_back(Train(data, f, t));
    EXPECT_GE(reports.back().max_abs_corr_initial, 0.5) << seed;
    EXPECT_LE(reports.back().max_abs_corr_final, 0.25) << seed;
  }
  EXPECT_NE(reports[0].history[0].loss.total, reports[1].history[0].loss.total);
}

TEST(Train, ReportConsistency) {
  auto data = SynthData(300, 6, 6, 4);
  FusionConfig f;
  f.common_dim = 4;
  f.output_dim = 4;
  TrainConfig t;
  t.steps = 20;
  const TrainReport r = Train(data, f, t);
  EXPECT_EQ(r.history.size(), 20u);
  EXPECT_EQ(r.max_abs_corr_initial, r.initial_corr.MaxAbs());
  EXPECT_EQ(r.max_abs_corr_final, r.final_corr.MaxAbs());
  EXPECT_EQ(r.history[0].max_abs_corr, r.max_abs_corr_initial);
  EXPECT_GE(r.wall_time_ms, 0.0);
  EXPECT_FALSE(r.audit_max_rel_error.has_value());
  for (const StepRecord& s : r.history) {
    EXPECT_NEAR(s.loss.total, s.loss.task_loss + f.lambda * s.loss.refine_loss, 1e-12);
  }
}

TEST(Train, FirstStepAudit) {
  for (FusionMethod method : {FusionMethod::kLinearProjection, FusionMethod::kWeightedSum}) {
    auto data = SynthData(40, 5, 7, 3);
    FusionConfig f;
    f.method = method;
    f.common_dim = 4;
    f.output_dim = 3;
    f.epsilon = 0.1;
    f.lambda = 0.5;
    TrainConfig t;
    t.steps = 1;
    t.audit_first_step = true;
    const TrainReport r = Train(data, f, t);
    ASSERT_TRUE(r.audit_max_rel_error.has_value());
    EXPECT_LT(*r.audit_max_rel_error, 1e-4);
  }
}

TEST(Train, MaskedEntriesNeverCarryGradient) {
  auto data = SynthData(1000, 8, 8);
  FusionConfig f;
  f.common_dim = 8;
  f.lambda = 0.005;
  f.epsilon = 0.6;
  TrainConfig t;
  t.steps = 300;
  t.task_weight = 0.0;
  t.init = InitMode::kMirrored;
  int masked_entries = 0;
  Train(data, f, t, [&](const StepAudit& a) {
    ASSERT_EQ(a.correlations.size(), a.refine_grad_c.size());
    for (std::size_t b = 0; b < a.correlations.size(); ++b) {
      const Matrix& c = a.correlations[b].data();
      const Matrix& g = a.refine_grad_c[b];
      double unmasked = 0;
      for (Eigen::Index i = 0; i < c.size(); ++i) {
        if (std::abs(c.data()[i]) <= 0.6) {
          ++masked_entries;
          ASSERT_EQ(g.data()[i], 0.0) << "step " << a.step;
        } else {
          unmasked += c.data()[i] * c.data()[i];
        }
      }
      EXPECT_NEAR(a.loss.refine_loss, unmasked, 1e-12);
    }
  });
  EXPECT_GT(masked_entries, 0);
}

TEST(Train, Shuffle) {
  std::vector<TrainExample> data;
  for (std::uint64_t s = 0; s < 5; ++s) data.push_back(SynthData(50, 3, s, 2).front());
  FusionConfig f;
  f.common_dim = 2;
  f.output_dim = 2;
  TrainConfig t;
  t.steps = 12;
  t.batch_size = 2;
  t.shuffle = true;
  const TrainReport a = Train(data, f, t);
  const TrainReport b = Train(data, f, t);
  t.shuffle = false;
  const TrainReport c = Train(data, f, t);
  bool differs = false;
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].loss.total, b.history[i].loss.total);
    differs |= a.history[i].loss.total != c.history[i].loss.total;
  }
  EXPECT_TRUE(differs);
}

TEST(Train, Errors) {
  auto data = SynthData(50, 4, 9, 3);
  FusionConfig f;
  f.common_dim = 3;
  f.output_dim = 3;
  TrainConfig t;
  t.steps = 2;
  FusionConfig concat = f;
  concat.method = FusionMethod::kConcat;
  EXPECT_TRUE(FailsWith([&] { Train(data, concat, t); }, ErrorKind::kInvalidArgument, "lp or wsum"));
  EXPECT_TRUE(FailsWith([&] { Train(std::vector<TrainExample>{}, f, t); }, ErrorKind::kInvalidArgument, "empty"));
  FusionConfig wrong_out = f;
  wrong_out.output_dim = 4;
  EXPECT_TRUE(FailsWith([&] { Train(data, wrong_out, t); }, ErrorKind::kShapeMismatch, "target"));
  std::vector<TrainExample> misaligned{
      {FeatureMatrix(RandomMatrix(10, 4, 1), 20), FeatureMatrix(RandomMatrix(11, 4, 2), 20), Matrix()}};
  TrainConfig no_task = t;
  no_task.task_weight = 0;
  EXPECT_TRUE(FailsWith([&] { Train(misaligned, f, no_task); }, ErrorKind::kShapeMismatch, "aligned"));
  TrainConfig bad = t;
  bad.steps = 0;
  EXPECT_TRUE(FailsWith([&] { Train(data, f, bad); }, ErrorKind::kInvalidArgument));
}

TEST(Train, DivergenceReportsStep) {
  auto data = SynthData(50, 4, 10, 3);
  for (Eigen::Index i = 0; i < data[0].target.size(); ++i) data[0].target.data()[i] *= 1e150;
  FusionConfig f;
  f.common_dim = 3;
  f.output_dim = 3;
  TrainConfig t;
  t.optimizer = OptimizerKind::kSgd;
  t.learning_rate = 1e3;
  t.warmup_steps = 0;
  t.steps = 50;
  EXPECT_TRUE(FailsWith([&] { Train(data, f, t); }, ErrorKind::kDiverged, "training diverged at step"));
}

}  // namespace
}  // namespace ffuse
