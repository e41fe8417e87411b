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

#include <span>
#include <utility>

#include "ffuse/feature.hpp"

namespace ffuse {

/// K x K Pearson cross-correlation between two streams.
class CorrelationMatrix {
 public:
  /// Validates finiteness and the [-1, 1] bound (with 1e-9 slack).
  explicit CorrelationMatrix(Matrix data);

  const Matrix& data() const noexcept { return data_; }
  std::ptrdiff_t rows() const noexcept { return data_.rows(); }
  std::ptrdiff_t cols() const noexcept { return data_.cols(); }
  double operator()(std::ptrdiff_t i, std::ptrdiff_t j) const { return data_(i, j); }

  double MaxAbs() const { return data_.cwiseAbs().maxCoeff(); }
  double MeanAbs() const { return data_.cwiseAbs().mean(); }
  double MaxAbsDiagonal() const { return data_.diagonal().cwiseAbs().maxCoeff(); }

 private:
  Matrix data_;
};

/// C = zscore(u)^T zscore(v) / T. Requires equal shapes and T >= 2.
CorrelationMatrix CrossCorrelation(const Matrix& u_t, const Matrix& v_t);
CorrelationMatrix CrossCorrelation(const FeatureMatrix& u_t, const FeatureMatrix& v_t);

/// Pulls dL/dC back to the two streams through the z-score.
std::pair<Matrix, Matrix> CrossCorrelationBackward(const Matrix& u_t, const Matrix& v_t,
                                                   const Matrix& grad_c);

/// Sum of c_ij^2 over entries with |c_ij| > epsilon (strict).
double RefineLoss(const CorrelationMatrix& c, double epsilon);

/// dL/dC = 2 c_ij where |c_ij| > epsilon, exactly 0 elsewhere.
Matrix RefineLossGradC(const CorrelationMatrix& c, double epsilon);

/// Fraction of entries with |c_ij| <= epsilon.
double MaskedFraction(const CorrelationMatrix& c, double epsilon);

/// Gradient of RefineLoss(CrossCorrelation(u_t, v_t), epsilon) w.r.t. both
/// streams. Fully masked matrices short-circuit to exact zeros.
std::pair<Matrix, Matrix> RefineLossBackward(const Matrix& u_t, const Matrix& v_t,
                                             double epsilon);

struct LossBreakdown {
  double task_loss = 0.0;
  double refine_loss = 0.0;
  double total = 0.0;
  double masked_fraction = 0.0;
};

/// total = task + lambda * refine. Negative inputs are rejected.
LossBreakdown CombinedLoss(double task, double refine, double lambda,
                           double masked_fraction = 0.0);

/// Mean refine loss over a nonempty batch of (u_t, v_t) pairs, summed in
/// batch order.
double BatchRefineLoss(std::span<const std::pair<FeatureMatrix, FeatureMatrix>> batch,
                       double epsilon);

/// Surrogate task loss: mean squared error over all entries.
double MseLoss(const Matrix& prediction, const Matrix& target);
Matrix MseBackward(const Matrix& prediction, const Matrix& target);

void CheckEpsilon(double epsilon);

}  // namespace ffuse
