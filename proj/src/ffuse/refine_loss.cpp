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

#include "ffuse/refine_loss.hpp"

#include <cmath>
#include <sstream>

#include "ffuse/error.hpp"

namespace ffuse {

namespace {

constexpr double kBoundSlack = 1e-9;

void CheckPair(const Matrix& u_t, const Matrix& v_t) {
  if (u_t.rows() != v_t.rows() || u_t.cols() != v_t.cols()) {
    std::ostringstream os;
    os << "cross-correlation needs equal shapes, got " << u_t.rows() << "x"
       << u_t.cols() << " and " << v_t.rows() << "x" << v_t.cols();
    Fail(ErrorKind::kShapeMismatch, os.str());
  }
  if (u_t.rows() < 2) {
    Fail(ErrorKind::kInvalidArgument, "insufficient frames for variance");
  }
}

}  // namespace

void CheckEpsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    Fail(ErrorKind::kInvalidArgument, "epsilon must lie in [0, 1]");
  }
}

CorrelationMatrix::CorrelationMatrix(Matrix data) : data_(std::move(data)) {
  CheckFinite(data_, "correlation matrix");
  for (Eigen::Index i = 0; i < data_.rows(); ++i) {
    for (Eigen::Index j = 0; j < data_.cols(); ++j) {
      if (std::abs(data_(i, j)) > 1.0 + kBoundSlack) {
        std::ostringstream os;
        os << "correlation entry (" << i << ", " << j << ") = " << data_(i, j)
           << " outside [-1, 1]";
        Fail(ErrorKind::kInvalidArgument, os.str());
      }
    }
  }
}

CorrelationMatrix CrossCorrelation(const Matrix& u_t, const Matrix& v_t) {
  CheckPair(u_t, v_t);
  const Matrix zu = MeanVarNormalize(u_t);
  const Matrix zv = MeanVarNormalize(v_t);
  Matrix c = zu.transpose() * zv;
  c /= static_cast<double>(u_t.rows());
  return CorrelationMatrix(std::move(c));
}

CorrelationMatrix CrossCorrelation(const FeatureMatrix& u_t, const FeatureMatrix& v_t) {
  return CrossCorrelation(u_t.data(), v_t.data());
}

std::pair<Matrix, Matrix> CrossCorrelationBackward(const Matrix& u_t, const Matrix& v_t,
                                                   const Matrix& grad_c) {
  CheckPair(u_t, v_t);
  if (grad_c.rows() != u_t.cols() || grad_c.cols() != v_t.cols()) {
    Fail(ErrorKind::kShapeMismatch, "correlation gradient has wrong shape");
  }
  const double t = static_cast<double>(u_t.rows());
  const Matrix zu = MeanVarNormalize(u_t);
  const Matrix zv = MeanVarNormalize(v_t);
  const Matrix dzu = zv * grad_c.transpose() / t;
  const Matrix dzv = zu * grad_c / t;
  return {MeanVarNormalizeBackward(u_t, dzu), MeanVarNormalizeBackward(v_t, dzv)};
}

double RefineLoss(const CorrelationMatrix& c, double epsilon) {
  CheckEpsilon(epsilon);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double v = c(i, j);
      if (std::abs(v) > epsilon) loss += v * v;
    }
  }
  return loss;
}

Matrix RefineLossGradC(const CorrelationMatrix& c, double epsilon) {
  CheckEpsilon(epsilon);
  Matrix g = Matrix::Zero(c.rows(), c.cols());
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double v = c(i, j);
      if (std::abs(v) > epsilon) g(i, j) = 2.0 * v;
    }
  }
  return g;
}

double MaskedFraction(const CorrelationMatrix& c, double epsilon) {
  const auto masked = (c.data().array().abs() <= epsilon).count();
  return static_cast<double>(masked) / static_cast<double>(c.data().size());
}

std::pair<Matrix, Matrix> RefineLossBackward(const Matrix& u_t, const Matrix& v_t,
                                             double epsilon) {
  const CorrelationMatrix c = CrossCorrelation(u_t, v_t);
  const Matrix g = RefineLossGradC(c, epsilon);
  if (g.isZero(0.0)) {
    return {Matrix::Zero(u_t.rows(), u_t.cols()), Matrix::Zero(v_t.rows(), v_t.cols())};
  }
  return CrossCorrelationBackward(u_t, v_t, g);
}

LossBreakdown CombinedLoss(double task, double refine, double lambda,
                           double masked_fraction) {
  if (!(task >= 0.0) || !(refine >= 0.0) || !(lambda >= 0.0)) {
    std::ostringstream os;
    os << "combined loss needs nonnegative inputs, got task=" << task
       << " refine=" << refine << " lambda=" << lambda;
    Fail(ErrorKind::kInvalidArgument, os.str());
  }
  return LossBreakdown{task, refine, task + lambda * refine, masked_fraction};
}

double BatchRefineLoss(std::span<const std::pair<FeatureMatrix, FeatureMatrix>> batch,
                       double epsilon) {
  if (batch.empty()) Fail(ErrorKind::kInvalidArgument, "empty batch");
  const std::ptrdiff_t k = batch.front().first.dims();
  double sum = 0.0;
  for (const auto& [u_t, v_t] : batch) {
    if (u_t.dims() != k || v_t.dims() != k) {
      Fail(ErrorKind::kShapeMismatch, "batch pairs disagree on feature dim");
    }
    sum += RefineLoss(CrossCorrelation(u_t, v_t), epsilon);
  }
  return sum / static_cast<double>(batch.size());
}

double MseLoss(const Matrix& prediction, const Matrix& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
    std::ostringstream os;
    os << "task target is " << target.rows() << "x" << target.cols()
       << ", prediction is " << prediction.rows() << "x" << prediction.cols();
    Fail(ErrorKind::kShapeMismatch, os.str());
  }
  return (prediction - target).squaredNorm() / static_cast<double>(prediction.size());
}

Matrix MseBackward(const Matrix& prediction, const Matrix& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
    Fail(ErrorKind::kShapeMismatch, "task target shape mismatch");
  }
  return (2.0 / static_cast<double>(prediction.size())) * (prediction - target);
}

}  // namespace ffuse
