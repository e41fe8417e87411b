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
#include <string>
#include <vector>

#include "ffuse/feature.hpp"

namespace ffuse {

/// |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
/// The floor keeps near-zero entries from turning rounding noise in the
/// difference quotient into unbounded relative error.
inline constexpr double kGradCheckFloor = 1e-3;
double RelativeError(double analytic, double numeric);

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped = 0;  // entries whose perturbation crossed a mask boundary
};

using MaskSignature = std::function<std::vector<bool>()>;

/// Central differences of f over every entry of x, compared with
/// `analytic`. x is perturbed in place and restored. When `signature` is
/// given, entries whose +h or -h evaluation changes it are skipped.
void CompareWithFiniteDifferences(GradCheckResult& result, Matrix& x,
                                  const Matrix& analytic,
                                  const std::function<double()>& f, double step,
                                  const MaskSignature& signature = {});

/// Finite-difference audit of every differentiable operation on random
/// shapes with T <= 8 and K <= 6.
std::vector<GradCheckResult> RunGradientAudit(std::uint64_t seed, double step = 1e-4);

}  // namespace ffuse
