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

#include "ffuse/feature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ffuse/error.hpp"

namespace ffuse {

namespace {

// Relative floor under which a column's standard deviation counts as zero.
constexpr double kZeroStdRel = 1e-12;

bool IsZeroStd(double stddev, double mean) {
  return stddev <= kZeroStdRel * std::max(1.0, std::abs(mean));
}

std::ptrdiff_t StrideRatio(double from_ms, double to_ms) {
  const double ratio = to_ms / from_ms;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * rounded) {
    std::ostringstream os;
    os << "incompatible strides: " << from_ms << " ms -> " << to_ms << " ms";
    Fail(ErrorKind::kInvalidArgument, os.str());
  }
  return static_cast<std::ptrdiff_t>(rounded);
}

}  // namespace

void CheckFinite(const Matrix& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        std::ostringstream os;
        os << what << ": non-finite value at (" << r << ", " << c << ")";
        Fail(ErrorKind::kNonFinite, os.str());
      }
    }
  }
}

FeatureMatrix::FeatureMatrix(Matrix data, double stride_ms)
    : data_(std::move(data)), stride_ms_(stride_ms) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    std::ostringstream os;
    os << "feature matrix must be at least 1x1, got " << data_.rows() << "x"
       << data_.cols();
    Fail(ErrorKind::kInvalidArgument, os.str());
  }
  if (!(stride_ms_ > 0.0) || !std::isfinite(stride_ms_)) {
    Fail(ErrorKind::kInvalidArgument, "stride_ms must be positive and finite");
  }
  CheckFinite(data_, "feature matrix");
}

Matrix MeanNormalize(const Matrix& x) {
  CheckFinite(x, "mean_normalize input");
  const RowVector mean = x.colwise().mean();
  return x.rowwise() - mean;
}

FeatureMatrix MeanNormalize(const FeatureMatrix& x) {
  return FeatureMatrix(MeanNormalize(x.data()), x.stride_ms());
}

Matrix MeanVarNormalize(const Matrix& x) {
  if (x.rows() < 2) {
    Fail(ErrorKind::kInvalidArgument, "insufficient frames for variance");
  }
  CheckFinite(x, "mean_var_normalize input");
  const double t = static_cast<double>(x.rows());
  Matrix out = MeanNormalize(x);
  const RowVector mean = x.colwise().mean();
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const double stddev = std::sqrt(out.col(c).squaredNorm() / t);
    if (IsZeroStd(stddev, mean(c))) {
      out.col(c).setZero();
    } else {
      out.col(c) /= stddev;
    }
  }
  return out;
}

FeatureMatrix MeanVarNormalize(const FeatureMatrix& x) {
  return FeatureMatrix(MeanVarNormalize(x.data()), x.stride_ms());
}

Matrix MeanNormalizeBackward(const Matrix& upstream) {
  return MeanNormalize(upstream);
}

Matrix MeanVarNormalizeBackward(const Matrix& x, const Matrix& upstream) {
  if (x.rows() != upstream.rows() || x.cols() != upstream.cols()) {
    Fail(ErrorKind::kShapeMismatch, "mean-variance backward: shape mismatch");
  }
  if (x.rows() < 2) {
    Fail(ErrorKind::kInvalidArgument, "insufficient frames for variance");
  }
  // dx = (dz - mean(dz) - z * mean(dz .* z)) / sigma, per column.
  const double t = static_cast<double>(x.rows());
  const RowVector mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  Matrix grad(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double stddev = std::sqrt(centered.col(c).squaredNorm() / t);
    if (IsZeroStd(stddev, mean(c))) {
      grad.col(c).setZero();
      continue;
    }
    const Eigen::VectorXd z = centered.col(c) / stddev;
    const Eigen::VectorXd dz = upstream.col(c);
    const double mean_dz = dz.mean();
    const double mean_dz_z = dz.dot(z) / t;
    grad.col(c) = (dz.array() - mean_dz - z.array() * mean_dz_z) / stddev;
  }
  return grad;
}

FeatureMatrix Downsample(const FeatureMatrix& x, double target_stride_ms,
                         DownsampleMode mode) {
  if (!(target_stride_ms > 0.0)) {
    Fail(ErrorKind::kInvalidArgument, "target stride must be positive");
  }
  const std::ptrdiff_t r = StrideRatio(x.stride_ms(), target_stride_ms);
  if (r == 1) return x;
  const std::ptrdiff_t t = x.frames();
  const std::ptrdiff_t out_rows = (t + r - 1) / r;
  Matrix out(out_rows, x.dims());
  for (std::ptrdiff_t i = 0; i < out_rows; ++i) {
    const std::ptrdiff_t begin = i * r;
    const std::ptrdiff_t end = std::min(begin + r, t);
    if (mode == DownsampleMode::kStride) {
      out.row(i) = x.data().row(begin);
    } else {
      out.row(i) = x.data().middleRows(begin, end - begin).colwise().mean();
    }
  }
  return FeatureMatrix(std::move(out), target_stride_ms);
}

std::pair<FeatureMatrix, FeatureMatrix> AlignPair(const FeatureMatrix& u,
                                                  const FeatureMatrix& v,
                                                  DownsampleMode mode) {
  const double coarse = std::max(u.stride_ms(), v.stride_ms());
  FeatureMatrix du = Downsample(u, coarse, mode);
  FeatureMatrix dv = Downsample(v, coarse, mode);
  const std::ptrdiff_t t = std::min(du.frames(), dv.frames());
  auto truncate = [t](FeatureMatrix m) {
    if (m.frames() == t) return m;
    return FeatureMatrix(m.data().topRows(t), m.stride_ms());
  };
  return {truncate(std::move(du)), truncate(std::move(dv))};
}

}  // namespace ffuse
