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

#include "ffuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ffuse/fusion.hpp"
#include "ffuse/random.hpp"
#include "ffuse/refine_loss.hpp"
#include "ffuse/trainer.hpp"

namespace ffuse {

namespace {

constexpr std::uint32_t kStreamAudit = 7;

Matrix RandomMatrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Normal();
  return m;
}

Eigen::Index RandomDim(Rng& rng, Eigen::Index lo, Eigen::Index hi) {
  const auto span = static_cast<double>(hi - lo + 1);
  return lo + std::min<Eigen::Index>(hi - lo, static_cast<Eigen::Index>(rng.Uniform01() * span));
}

double Contract(const Matrix& weights, const Matrix& y) {
  return (weights.array() * y.array()).sum();
}

void CompareRaw(GradCheckResult& result, double* x, Eigen::Index n, const double* analytic,
                const std::function<double()>& f, double step,
                const MaskSignature& signature) {
  const std::vector<bool> base = signature ? signature() : std::vector<bool>{};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double plus = f();
    const bool plus_same = !signature || signature() == base;
    x[i] = saved - step;
    const double minus = f();
    const bool minus_same = !signature || signature() == base;
    x[i] = saved;
    if (!plus_same || !minus_same) {
      ++result.skipped;
      continue;
    }
    const double numeric = (plus - minus) / (2.0 * step);
    result.max_rel_error = std::max(result.max_rel_error, RelativeError(analytic[i], numeric));
    ++result.checked;
  }
}

std::vector<bool> MaskBits(const CorrelationMatrix& c, double epsilon) {
  std::vector<bool> bits(static_cast<std::size_t>(c.data().size()));
  for (Eigen::Index i = 0; i < c.data().size(); ++i) {
    bits[static_cast<std::size_t>(i)] = std::abs(c.data().data()[i]) > epsilon;
  }
  return bits;
}

}  // namespace

double RelativeError(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

void CompareWithFiniteDifferences(GradCheckResult& result, Matrix& x,
                                  const Matrix& analytic,
                                  const std::function<double()>& f, double step,
                                  const MaskSignature& signature) {
  CompareRaw(result, x.data(), x.size(), analytic.data(), f, step, signature);
}

std::vector<GradCheckResult> RunGradientAudit(std::uint64_t seed, double step) {
  Rng rng(seed, kStreamAudit);
  const Eigen::Index t = RandomDim(rng, 3, 8);
  const Eigen::Index k1 = RandomDim(rng, 2, 6);
  const Eigen::Index k2 = RandomDim(rng, 2, 6);
  const Eigen::Index k = RandomDim(rng, 2, 6);
  std::vector<GradCheckResult> results;

  {
    GradCheckResult r{"affine"};
    AffineProjection p(RandomMatrix(rng, k1, k), RandomMatrix(rng, 1, k));
    Matrix x = RandomMatrix(rng, t, k1);
    const Matrix w = RandomMatrix(rng, t, k);
    const Matrix dx = AffineBackward(p, x, w);
    const AffineGrad g = p.grad;
    auto f = [&] { return Contract(w, AffineForward(p, x)); };
    CompareWithFiniteDifferences(r, x, dx, f, step);
    CompareWithFiniteDifferences(r, p.weight, g.weight, f, step);
    CompareRaw(r, p.bias.data(), p.bias.size(), g.bias.data(), f, step, {});
    results.push_back(r);
  }
  {
    GradCheckResult r{"mean_normalize"};
    Matrix x = RandomMatrix(rng, t, k1);
    const Matrix w = RandomMatrix(rng, t, k1);
    const Matrix dx = MeanNormalizeBackward(w);
    CompareWithFiniteDifferences(r, x, dx, [&] { return Contract(w, MeanNormalize(x)); },
                                 step);
    results.push_back(r);
  }
  {
    GradCheckResult r{"mean_var_normalize"};
    Matrix x = RandomMatrix(rng, t, k1);
    const Matrix w = RandomMatrix(rng, t, k1);
    const Matrix dx = MeanVarNormalizeBackward(x, w);
    CompareWithFiniteDifferences(r, x, dx,
                                 [&] { return Contract(w, MeanVarNormalize(x)); }, step);
    results.push_back(r);
  }
  {
    GradCheckResult r{"fuse_concat"};
    Matrix u = RandomMatrix(rng, t, k1);
    Matrix v = RandomMatrix(rng, t, k2);
    const Matrix w = RandomMatrix(rng, t, k1 + k2);
    const auto [du, dv] = ConcatBackward(w, k1);
    auto f = [&] {
      return Contract(w, FuseConcat(FeatureMatrix(u, 10.0), FeatureMatrix(v, 10.0)).data());
    };
    CompareWithFiniteDifferences(r, u, du, f, step);
    CompareWithFiniteDifferences(r, v, dv, f, step);
    results.push_back(r);
  }
  {
    GradCheckResult r{"fuse_linear_projection"};
    AffineProjection pu(RandomMatrix(rng, k1, k), RandomMatrix(rng, 1, k));
    AffineProjection pv(RandomMatrix(rng, k2, k), RandomMatrix(rng, 1, k));
    Matrix u = RandomMatrix(rng, t, k1);
    Matrix v = RandomMatrix(rng, t, k2);
    const Matrix w = RandomMatrix(rng, t, 2 * k);
    const auto [du, dv] = LinearProjectionBackward(pu, pv, u, v, w);
    const AffineGrad gu = pu.grad, gv = pv.grad;
    auto f = [&] {
      return Contract(w, FuseLinearProjection(pu, pv, FeatureMatrix(u, 20.0),
                                              FeatureMatrix(v, 20.0))
                             .data());
    };
    CompareWithFiniteDifferences(r, u, du, f, step);
    CompareWithFiniteDifferences(r, v, dv, f, step);
    CompareWithFiniteDifferences(r, pu.weight, gu.weight, f, step);
    CompareWithFiniteDifferences(r, pv.weight, gv.weight, f, step);
    CompareRaw(r, pu.bias.data(), pu.bias.size(), gu.bias.data(), f, step, {});
    CompareRaw(r, pv.bias.data(), pv.bias.size(), gv.bias.data(), f, step, {});
    results.push_back(r);
  }
  {
    GradCheckResult r{"fuse_weighted_sum"};
    AffineProjection pu(RandomMatrix(rng, k1, k), RandomMatrix(rng, 1, k));
    AffineProjection pv(RandomMatrix(rng, k2, k), RandomMatrix(rng, 1, k));
    ScalarGate g{0.3 + rng.Uniform01(), 0.3 + rng.Uniform01()};
    Matrix u = RandomMatrix(rng, t, k1);
    Matrix v = RandomMatrix(rng, t, k2);
    const Matrix w = RandomMatrix(rng, t, k);
    const auto [du, dv] = WeightedSumBackward(pu, pv, g, u, v, w);
    const AffineGrad gu = pu.grad, gv = pv.grad;
    const double ga = g.grad_alpha, gb = g.grad_beta;
    auto f = [&] {
      return Contract(w, FuseWeightedSum(pu, pv, g, FeatureMatrix(u, 20.0),
                                         FeatureMatrix(v, 20.0))
                             .data());
    };
    CompareWithFiniteDifferences(r, u, du, f, step);
    CompareWithFiniteDifferences(r, v, dv, f, step);
    CompareWithFiniteDifferences(r, pu.weight, gu.weight, f, step);
    CompareWithFiniteDifferences(r, pv.weight, gv.weight, f, step);
    CompareRaw(r, pu.bias.data(), pu.bias.size(), gu.bias.data(), f, step, {});
    CompareRaw(r, pv.bias.data(), pv.bias.size(), gv.bias.data(), f, step, {});
    CompareRaw(r, &g.alpha, 1, &ga, f, step, {});
    CompareRaw(r, &g.beta, 1, &gb, f, step, {});
    results.push_back(r);
  }
  {
    GradCheckResult r{"cross_correlation"};
    Matrix u = RandomMatrix(rng, t, k);
    Matrix v = RandomMatrix(rng, t, k);
    const Matrix w = RandomMatrix(rng, k, k);
    const auto [du, dv] = CrossCorrelationBackward(u, v, w);
    auto f = [&] { return Contract(w, CrossCorrelation(u, v).data()); };
    CompareWithFiniteDifferences(r, u, du, f, step);
    CompareWithFiniteDifferences(r, v, dv, f, step);
    results.push_back(r);
  }
  {
    GradCheckResult r{"refine_loss"};
    constexpr double kEpsilon = 0.3;
    Matrix u = RandomMatrix(rng, t, k);
    Matrix v = RandomMatrix(rng, t, k);
    const auto [du, dv] = RefineLossBackward(u, v, kEpsilon);
    auto f = [&] { return RefineLoss(CrossCorrelation(u, v), kEpsilon); };
    MaskSignature sig = [&] { return MaskBits(CrossCorrelation(u, v), kEpsilon); };
    CompareWithFiniteDifferences(r, u, du, f, step, sig);
    CompareWithFiniteDifferences(r, v, dv, f, step, sig);
    results.push_back(r);
  }
  {
    GradCheckResult r{"combined_loss"};
    const double lambda = rng.Uniform01();
    Matrix x(1, 2);
    x << 0.5 + rng.Uniform01(), 0.5 + rng.Uniform01();
    Matrix analytic(1, 2);
    analytic << 1.0, lambda;
    CompareWithFiniteDifferences(
        r, x, analytic, [&] { return CombinedLoss(x(0, 0), x(0, 1), lambda).total; }, step);
    results.push_back(r);
  }
  {
    GradCheckResult r{"task_loss_mse"};
    Matrix pred = RandomMatrix(rng, t, k);
    const Matrix target = RandomMatrix(rng, t, k);
    const Matrix dpred = MseBackward(pred, target);
    CompareWithFiniteDifferences(r, pred, dpred, [&] { return MseLoss(pred, target); },
                                 step);
    results.push_back(r);
  }
  for (FusionMethod method : {FusionMethod::kLinearProjection, FusionMethod::kWeightedSum}) {
    GradCheckResult r{std::string("train_step_") + std::string(ToString(method))};
    FusionConfig fc;
    fc.method = method;
    fc.common_dim = k;
    fc.output_dim = 3;
    fc.epsilon = 0.3;
    fc.lambda = 0.5;
    TrainConfig tc;
    tc.steps = 1;
    tc.batch_size = 2;
    tc.seed = seed;
    tc.audit_first_step = true;
    std::vector<TrainExample> data;
    for (int i = 0; i < 2; ++i) {
      data.push_back(TrainExample{FeatureMatrix(RandomMatrix(rng, t, k1), 20.0),
                                  FeatureMatrix(RandomMatrix(rng, t, k2), 20.0),
                                  RandomMatrix(rng, t, fc.output_dim)});
    }
    const TrainReport report = Train(data, fc, tc);
    r.max_rel_error = report.audit_max_rel_error.value_or(0.0);
    r.checked = 1;
    results.push_back(r);
  }
  return results;
}

}  // namespace ffuse
