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
#include <utility>

#include "ffuse/feature.hpp"

namespace ffuse {

struct SynthSpec {
  std::ptrdiff_t frames = 1000;
  std::ptrdiff_t k1 = 32;
  std::ptrdiff_t k2 = 32;
  double rho = 0.65;
  std::ptrdiff_t paired_dims = 32;
  std::uint64_t seed = 0;
  double stride_ms_u = 20.0;
  double stride_ms_v = 20.0;

  void Validate() const;
};

/// Draws a stream pair with corr(u_d, v_d) = rho for d < paired_dims.
///
/// u is i.i.d. standard normal, filled column by column from stream 1 of
/// the seed. v column d is rho * u_d + sqrt(1 - rho^2) * n_d for paired
/// dims and n_d otherwise, with n drawn column by column from stream 2.
/// Both streams are drawn at the finer of the two strides; a stream with a
/// coarser stride is then average-pooled down to it, so it has
/// ceil(frames / r) rows. Strides must be integer multiples.
std::pair<FeatureMatrix, FeatureMatrix> GeneratePair(const SynthSpec& spec);

}  // namespace ffuse
