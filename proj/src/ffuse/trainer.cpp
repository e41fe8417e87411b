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

#include "ffuse/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>

#include "ffuse/error.hpp"
#include "ffuse/gradcheck.hpp"
#include "ffuse/random.hpp"

namespace ffuse {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.98;
constexpr double kAdamEps = 1e-9;
constexpr std::uint32_t kStreamShuffle = 4;
constexpr double kAuditStep = 1e-4;
constexpr int kAuditEntriesPerTensor = 6;

struct ParamRef {
  double* value;
  const double* grad;
  Eigen::Index size;
};

std::vector<ParamRef> CollectParams(FusionModel& m) {
  std::vector<ParamRef> out;
  auto add_affine = [&out](AffineProjection& p) {
    out.push_back({p.weight.data(), p.grad.weight.data(), p.weight.size()});
    out.push_back({p.bias.data(), p.grad.bias.data(), p.bias.size()});
  };
  if (m.proj_u) add_affine(*m.proj_u);
  if (m.proj_v) add_affine(*m.proj_v);
  if (m.config.method == FusionMethod::kWeightedSum) {
    out.push_back({&m.gate.alpha, &m.gate.grad_alpha, 1});
    out.push_back({&m.gate.beta, &m.gate.grad_beta, 1});
  }
  add_affine(m.output);
  return out;
}

class Optimizer {
 public:
  explicit Optimizer(OptimizerKind kind) : kind_(kind) {}

  void Step(const std::vector<ParamRef>& params, double lr) {
    if (kind_ == OptimizerKind::kSgd) {
      for (const ParamRef& p : params) {
        for (Eigen::Index i = 0; i < p.size; ++i) p.value[i] -= lr * p.grad[i];
      }
      return;
    }
    if (first_.empty()) {
      for (const ParamRef& p : params) {
        first_.emplace_back(Eigen::ArrayXd::Zero(p.size));
        second_.emplace_back(Eigen::ArrayXd::Zero(p.size));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const ParamRef& p = params[k];
      Eigen::ArrayXd& m = first_[k];
      Eigen::ArrayXd& v = second_[k];
      for (Eigen::Index i = 0; i < p.size; ++i) {
        const double g = p.grad[i];
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g;
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g * g;
        p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
      }
    }
  }

 private:
  OptimizerKind kind_;
  std::int64_t t_ = 0;
  std::vector<Eigen::ArrayXd> first_;
  std::vector<Eigen::ArrayXd> second_;
};

// Forward state of one example, kept for the backward pass.
struct Forward {
  Matrix u_t, v_t;    // projected streams
  Matrix nu, nv;      // mean-normalized projected streams (task path only)
  Matrix fused, out;  // task path only
  double task = 0.0;
  CorrelationMatrix corr{Matrix::Zero(1, 1)};
  double refine = 0.0;
};

Forward RunForward(const FusionModel& model, const TrainExample& ex, double task_weight) {
  Forward f;
  f.u_t = AffineForward(*model.proj_u, ex.u.data());
  f.v_t = AffineForward(*model.proj_v, ex.v.data());
  if (task_weight > 0.0) {
    f.nu = MeanNormalize(f.u_t);
    f.nv = MeanNormalize(f.v_t);
    if (model.config.method == FusionMethod::kLinearProjection) {
      f.fused.resize(f.nu.rows(), f.nu.cols() + f.nv.cols());
      f.fused << f.nu, f.nv;
    } else {
      f.fused = WeightedCombine(model.gate, f.nu, f.nv);
    }
    f.out = AffineForward(model.output, f.fused);
    f.task = MseLoss(f.out, ex.target);
  }
  f.corr = CrossCorrelation(f.u_t, f.v_t);
  f.refine = RefineLoss(f.corr, model.config.epsilon);
  return f;
}

// Task channel: flows through every trainable parameter.
void TaskBackward(FusionModel& model, const TrainExample& ex, const Forward& f,
                  double scale) {
  const Matrix dout = scale * MseBackward(f.out, ex.target);
  const Matrix dfused = AffineBackward(model.output, f.fused, dout);
  Matrix dnu, dnv;
  if (model.config.method == FusionMethod::kLinearProjection) {
    const auto k = f.nu.cols();
    dnu = dfused.leftCols(k);
    dnv = dfused.rightCols(k);
  } else {
    std::tie(dnu, dnv) = WeightedCombineBackward(model.gate, f.nu, f.nv, dfused);
  }
  AffineBackward(*model.proj_u, ex.u.data(), MeanNormalizeBackward(dnu));
  AffineBackward(*model.proj_v, ex.v.data(), MeanNormalizeBackward(dnv));
}

// Refine channel: reaches only the two stream projections.
void RefineBackward(const FusionModel& model, const TrainExample& ex, const Forward& f,
                    const Matrix& grad_c, double scale, AffineGrad& acc_u,
                    AffineGrad& acc_v) {
  if (grad_c.isZero(0.0)) return;
  auto [du_t, dv_t] = CrossCorrelationBackward(f.u_t, f.v_t, scale * grad_c);
  AffineBackward(*model.proj_u, ex.u.data(), du_t, acc_u);
  AffineBackward(*model.proj_v, ex.v.data(), dv_t, acc_v);
}

AffineGrad ZeroLike(const AffineProjection& p) {
  return AffineGrad{Matrix::Zero(p.weight.rows(), p.weight.cols()),
                    RowVector::Zero(p.bias.size())};
}

void CheckData(const FusionModel& model, std::span<const TrainExample> data,
               double task_weight) {
  if (data.empty()) Fail(ErrorKind::kInvalidArgument, "training data is empty");
  if (model.config.method == FusionMethod::kConcat) {
    Fail(ErrorKind::kInvalidArgument,
         "training needs a projecting fusion method (lp or wsum)");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const TrainExample& ex = data[i];
    std::ostringstream os;
    os << "example " << i << ": ";
    if (ex.u.dims() != model.k1 || ex.v.dims() != model.k2) {
      os << "stream dims (" << ex.u.dims() << ", " << ex.v.dims()
         << ") do not match model (" << model.k1 << ", " << model.k2 << ")";
      Fail(ErrorKind::kShapeMismatch, os.str());
    }
    if (ex.u.frames() != ex.v.frames() || ex.u.stride_ms() != ex.v.stride_ms()) {
      os << "streams are not aligned (run AlignPair first)";
      Fail(ErrorKind::kShapeMismatch, os.str());
    }
    if (ex.u.frames() < 2) {
      os << "insufficient frames for variance";
      Fail(ErrorKind::kInvalidArgument, os.str());
    }
    if (task_weight > 0.0 && (ex.target.rows() != ex.u.frames() ||
                              ex.target.cols() != model.config.output_dim)) {
      os << "target is " << ex.target.rows() << "x" << ex.target.cols() << ", expected "
         << ex.u.frames() << "x" << model.config.output_dim;
      Fail(ErrorKind::kShapeMismatch, os.str());
    }
  }
}

CorrelationMatrix ProjectedCorrelation(const FusionModel& model, const TrainExample& ex) {
  return CrossCorrelation(AffineForward(*model.proj_u, ex.u.data()),
                          AffineForward(*model.proj_v, ex.v.data()));
}

// Compares accumulated gradients against central differences of the batch
// objective on a spread of entries per tensor. Entries whose perturbation
// flips a refinement mask bit are skipped.
double AuditGradients(FusionModel& model, std::span<const TrainExample* const> batch,
                      double task_weight) {
  double worst = 0.0;
  for (const ParamRef& p : CollectParams(model)) {
    const Eigen::Index n = std::min<Eigen::Index>(kAuditEntriesPerTensor, p.size);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index i = (k * p.size) / n;
      const double saved = p.value[i];
      const LossBreakdown base = EvaluateObjective(model, batch, task_weight);
      p.value[i] = saved + kAuditStep;
      const LossBreakdown plus = EvaluateObjective(model, batch, task_weight);
      p.value[i] = saved - kAuditStep;
      const LossBreakdown minus = EvaluateObjective(model, batch, task_weight);
      p.value[i] = saved;
      if (plus.masked_fraction != base.masked_fraction ||
          minus.masked_fraction != base.masked_fraction) {
        continue;
      }
      const double numeric = (plus.total - minus.total) / (2.0 * kAuditStep);
      worst = std::max(worst, RelativeError(p.grad[i], numeric));
    }
  }
  return worst;
}

}  // namespace

std::string_view ToString(OptimizerKind k) {
  return k == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind ParseOptimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  Fail(ErrorKind::kInvalidArgument, "unknown optimizer '" + std::string(s) + "'");
}

void TrainConfig::Validate() const {
  if (steps < 1) Fail(ErrorKind::kInvalidArgument, "steps must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    Fail(ErrorKind::kInvalidArgument, "learning rate must be positive");
  }
  if (warmup_steps < 0) Fail(ErrorKind::kInvalidArgument, "warmup steps must be >= 0");
  if (batch_size < 1) Fail(ErrorKind::kInvalidArgument, "batch size must be >= 1");
  if (!(task_weight >= 0.0) || !std::isfinite(task_weight)) {
    Fail(ErrorKind::kInvalidArgument, "task weight must be nonnegative");
  }
}

double LrSchedule(std::int64_t step, const TrainConfig& cfg) {
  const double peak = cfg.learning_rate;
  if (cfg.warmup_steps == 0) return peak;
  const double s = static_cast<double>(std::max<std::int64_t>(step, 1));
  const double w = static_cast<double>(cfg.warmup_steps);
  return s <= w ? peak * s / w : peak * std::sqrt(w / s);
}

LossBreakdown EvaluateObjective(const FusionModel& model,
                                std::span<const TrainExample* const> batch,
                                double task_weight) {
  const double b = static_cast<double>(batch.size());
  double task = 0.0, refine = 0.0, masked = 0.0;
  for (const TrainExample* ex : batch) {
    const Forward f = RunForward(model, *ex, task_weight);
    task += f.task;
    refine += f.refine;
    masked += MaskedFraction(f.corr, model.config.epsilon);
  }
  return CombinedLoss(task_weight * task / b, refine / b, model.config.lambda, masked / b);
}

TrainReport Train(std::span<const TrainExample> data, const FusionConfig& fusion_cfg,
                  const TrainConfig& train_cfg, const StepObserver& observer) {
  train_cfg.Validate();
  if (data.empty()) Fail(ErrorKind::kInvalidArgument, "training data is empty");
  FusionModel model = MakeFusionModel(fusion_cfg, data.front().u.dims(),
                                      data.front().v.dims(), train_cfg.seed,
                                      train_cfg.init);
  return Train(std::move(model), data, train_cfg, observer);
}

TrainReport Train(FusionModel model, std::span<const TrainExample> data,
                  const TrainConfig& cfg, const StepObserver& observer) {
  const auto start = std::chrono::steady_clock::now();
  cfg.Validate();
  model.config.Validate();
  CheckData(model, data, cfg.task_weight);

  const double lambda = model.config.lambda;
  const double epsilon = model.config.epsilon;
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  const double scale = 1.0 / static_cast<double>(batch_size);

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(cfg.seed, kStreamShuffle);
  auto reshuffle = [&] {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffle_rng.Uniform01() * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
  };
  if (cfg.shuffle) reshuffle();
  std::size_t cursor = 0;

  const CorrelationMatrix initial = ProjectedCorrelation(model, data.front());
  Optimizer optimizer(cfg.optimizer);
  std::vector<StepRecord> history;
  history.reserve(static_cast<std::size_t>(cfg.steps));
  std::optional<double> audit;

  std::vector<const TrainExample*> batch(batch_size);
  std::vector<CorrelationMatrix> corrs;
  std::vector<Matrix> grad_cs;
  AffineGrad refine_u = ZeroLike(*model.proj_u);
  AffineGrad refine_v = ZeroLike(*model.proj_v);

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    for (auto& item : batch) {
      if (cursor == order.size()) {
        cursor = 0;
        if (cfg.shuffle) reshuffle();
      }
      item = &data[order[cursor++]];
    }

    model.ZeroGrad();
    refine_u.SetZero();
    refine_v.SetZero();
    corrs.clear();
    grad_cs.clear();
    double task = 0.0, refine = 0.0, masked = 0.0, max_corr = 0.0;

    try {
      for (const TrainExample* ex : batch) {
        Forward f = RunForward(model, *ex, cfg.task_weight);
        task += f.task;
        refine += f.refine;
        masked += MaskedFraction(f.corr, epsilon);
        max_corr = std::max(max_corr, f.corr.MaxAbs());
        if (cfg.task_weight > 0.0) TaskBackward(model, *ex, f, cfg.task_weight * scale);
        if (lambda > 0.0) {
          Matrix grad_c = RefineLossGradC(f.corr, epsilon);
          RefineBackward(model, *ex, f, grad_c, scale, refine_u, refine_v);
          grad_cs.push_back(std::move(grad_c));
        }
        corrs.push_back(std::move(f.corr));
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNonFinite) throw;
      std::ostringstream os;
      os << "training diverged at step " << step << " (" << e.what() << ")";
      Fail(ErrorKind::kDiverged, os.str());
    }

    if (lambda > 0.0) {
      model.proj_u->grad.weight += lambda * refine_u.weight;
      model.proj_u->grad.bias += lambda * refine_u.bias;
      model.proj_v->grad.weight += lambda * refine_v.weight;
      model.proj_v->grad.bias += lambda * refine_v.bias;
    }

    const double b = static_cast<double>(batch_size);
    const LossBreakdown loss =
        CombinedLoss(cfg.task_weight * task / b, refine / b, lambda, masked / b);
    if (!std::isfinite(loss.total)) {
      std::ostringstream os;
      os << "training diverged at step " << step << " (total loss " << loss.total << ")";
      Fail(ErrorKind::kDiverged, os.str());
    }

    if (step == 0 && cfg.audit_first_step) {
      audit = AuditGradients(model, batch, cfg.task_weight);
    }
    if (observer) observer(StepAudit{step, model, corrs, grad_cs, loss});

    const double lr = LrSchedule(step + 1, cfg);
    const std::vector<ParamRef> params = CollectParams(model);
    optimizer.Step(params, lr);
    for (const ParamRef& p : params) {
      if (!Eigen::Map<const Eigen::ArrayXd>(p.value, p.size).allFinite()) {
        std::ostringstream os;
        os << "training diverged at step " << step << " (non-finite parameters)";
        Fail(ErrorKind::kDiverged, os.str());
      }
    }
    if (model.config.method == FusionMethod::kWeightedSum) CheckGate(model.gate);
    history.push_back(StepRecord{loss, lr, max_corr});
  }

  const CorrelationMatrix final_corr = ProjectedCorrelation(model, data.front());
  const double wall = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  return TrainReport{std::move(history), initial, final_corr, initial.MaxAbs(),
                     final_corr.MaxAbs(), wall, audit, std::move(model)};
}

}  // namespace ffuse
