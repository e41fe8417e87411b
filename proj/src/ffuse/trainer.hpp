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

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ffuse/feature.hpp"
#include "ffuse/fusion.hpp"
#include "ffuse/refine_loss.hpp"

namespace ffuse {

enum class OptimizerKind { kSgd, kAdam };

std::string_view ToString(OptimizerKind k);
OptimizerKind ParseOptimizer(std::string_view s);

struct TrainConfig {
  std::int64_t steps = 2000;
  double learning_rate = 0.002;  // peak
  std::int64_t warmup_steps = 100;
  std::int64_t batch_size = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  InitMode init = InitMode::kIndependent;
  // Scale on the surrogate task loss; 0 trains on the refinement term alone.
  double task_weight = 1.0;
  bool shuffle = false;
  // Finite-difference check of the step-0 parameter gradients.
  bool audit_first_step = false;

  void Validate() const;
};

/// Linear warmup to the peak rate over warmup_steps, then inverse-sqrt
/// decay: peak * min(s / w, sqrt(w / s)) with s = max(step, 1). Constant
/// peak when warmup_steps == 0.
double LrSchedule(std::int64_t step, const TrainConfig& cfg);

/// One utterance: two streams plus the task target (T x output_dim). The
/// target may be empty when the task weight is 0.
struct TrainExample {
  FeatureMatrix u;
  FeatureMatrix v;
  Matrix target;
};

struct StepRecord {
  LossBreakdown loss;  // loss.task_loss already carries task_weight
  double lr = 0.0;
  double max_abs_corr = 0.0;
};

/// What an observer sees after the backward pass of a step, before the
/// parameter update. Correlation and dL/dC are per batch item.
struct StepAudit {
  std::int64_t step;
  const FusionModel& model;
  std::span<const CorrelationMatrix> correlations;
  std::span<const Matrix> refine_grad_c;
  const LossBreakdown& loss;
};

using StepObserver = std::function<void(const StepAudit&)>;

struct TrainReport {
  std::vector<StepRecord> history;
  CorrelationMatrix initial_corr;  // first example, before any update
  CorrelationMatrix final_corr;    // first example, after the last update
  double max_abs_corr_initial = 0.0;
  double max_abs_corr_final = 0.0;
  double wall_time_ms = 0.0;
  std::optional<double> audit_max_rel_error;
  FusionModel model;
};

/// Trains a freshly initialized model (seeded from train_cfg.seed).
TrainReport Train(std::span<const TrainExample> data, const FusionConfig& fusion_cfg,
                  const TrainConfig& train_cfg, const StepObserver& observer = {});

/// Continues training an existing model.
TrainReport Train(FusionModel model, std::span<const TrainExample> data,
                  const TrainConfig& train_cfg, const StepObserver& observer = {});

/// Batch objective of the trainer (task_weight * mean task loss +
/// lambda * mean refine loss) without touching gradients.
LossBreakdown EvaluateObjective(const FusionModel& model,
                                std::span<const TrainExample* const> batch,
                                double task_weight);

}  // namespace ffuse
