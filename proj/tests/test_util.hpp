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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include <string_view>

#include "ffuse/error.hpp"
#include "ffuse/feature.hpp"

namespace ffuse::testing {

inline Matrix FromArray(const double* data, int rows, int cols) {
  return Eigen::Map<const Matrix>(data, rows, cols);
}

#define FFUSE_ORACLE(name) ::ffuse::testing::FromArray(name, name##_rows, name##_cols)

inline Matrix RandomMatrix(std::ptrdiff_t rows, std::ptrdiff_t cols, unsigned seed,
                           double lo = -1.0, double hi = 1.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(gen);
  return m;
}

inline ::testing::AssertionResult MatrixNear(const Matrix& actual, const Matrix& expected,
                                             double tol) {
  if (actual.rows() != expected.rows() || actual.cols() != expected.cols()) {
    return ::testing::AssertionFailure()
           << "shape " << actual.rows() << "x" << actual.cols() << " vs " << expected.rows()
           << "x" << expected.cols();
  }
  for (Eigen::Index r = 0; r < actual.rows(); ++r) {
    for (Eigen::Index c = 0; c < actual.cols(); ++c) {
      const double d = std::abs(actual(r, c) - expected(r, c));
      if (!(d <= tol)) {
        return ::testing::AssertionFailure()
               << "(" << r << "," << c << "): " << actual(r, c) << " vs " << expected(r, c)
               << " (diff " << d << ", tol " << tol << ")";
      }
    }
  }
  return ::testing::AssertionSuccess();
}

inline bool BitEqual(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

// Central differences of f with respect to every entry of x.
template <typename Fn>
Matrix NumericGradient(Fn&& f, Matrix& x, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f();
    x.data()[i] = keep - h;
    const double down = f();
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double MaxRelError(const Matrix& analytic, const Matrix& numeric, double floor = 1e-3) {
  double worst = 0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double n = numeric.data()[i];
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
  }
  return worst;
}

template <typename Fn>
::testing::AssertionResult FailsWith(Fn&& fn, ErrorKind kind, std::string_view needle = {}) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() != kind) {
      return ::testing::AssertionFailure() << "wrong error kind for: " << e.what();
    }
    if (std::string_view(e.what()).find(needle) == std::string_view::npos) {
      return ::testing::AssertionFailure() << "message '" << e.what() << "' lacks '" << needle
                                           << "'";
    }
    return ::testing::AssertionSuccess();
  }
  return ::testing::AssertionFailure() << "no error raised";
}

}  // namespace ffuse::testing
