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

#include <Eigen/Dense>

#include <cstddef>
#include <utility>

namespace ffuse {

/// Dense row-major matrix; rows are time frames, columns feature dims.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// A T x K feature stream sampled every stride_ms milliseconds.
///
/// Construction validates shape, finiteness and stride; the value is
/// immutable afterwards and safe to share between threads.
class FeatureMatrix {
 public:
  FeatureMatrix(Matrix data, double stride_ms);

  const Matrix& data() const noexcept { return data_; }
  double stride_ms() const noexcept { return stride_ms_; }
  std::ptrdiff_t frames() const noexcept { return data_.rows(); }
  std::ptrdiff_t dims() const noexcept { return data_.cols(); }

 private:
  Matrix data_;
  double stride_ms_;
};

/// Throws kNonFinite naming the first offending (row, col).
void CheckFinite(const Matrix& m, const char* what);

/// Subtracts the per-column mean over time.
FeatureMatrix MeanNormalize(const FeatureMatrix& x);
Matrix MeanNormalize(const Matrix& x);

/// Per-column z-score with population variance (divisor T). Columns with
/// zero variance map to all zeros. Requires T >= 2.
FeatureMatrix MeanVarNormalize(const FeatureMatrix& x);
Matrix MeanVarNormalize(const Matrix& x);

/// Exact Jacobian-vector products of the two normalizations. The
/// mean-variance backward needs the forward input; zero-variance columns
/// receive zero gradient.
Matrix MeanNormalizeBackward(const Matrix& upstream);
Matrix MeanVarNormalizeBackward(const Matrix& x, const Matrix& upstream);

enum class DownsampleMode { kAveragePool, kStride };

/// Reduces frame rate by the integer ratio target_stride_ms / x.stride_ms.
/// Output has ceil(T / r) rows; average pooling averages each window, the
/// ragged tail window included. kStride keeps the first row of each window.
FeatureMatrix Downsample(const FeatureMatrix& x, double target_stride_ms,
                         DownsampleMode mode = DownsampleMode::kAveragePool);

/// Brings two streams to the coarser stride and the shorter length.
std::pair<FeatureMatrix, FeatureMatrix> AlignPair(
    const FeatureMatrix& u, const FeatureMatrix& v,
    DownsampleMode mode = DownsampleMode::kAveragePool);

}  // namespace ffuse
