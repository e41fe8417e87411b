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
#include <random>

namespace ffuse {

/// Portable seeded generator.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. It is seeded through std::seed_seq{seed_lo, seed_hi, stream},
/// also standard-specified, so (seed, stream) names one reproducible
/// sequence on every conforming platform. Distributions are implemented
/// here instead of using <random>'s, whose algorithms are unspecified:
///   Uniform01: top 53 bits of one draw scaled by 2^-53, in [0, 1).
///   Normal:    Box-Muller on two Uniform01 draws (u1 mapped to (0, 1]),
///              returning the cosine branch then the cached sine branch.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint32_t stream);

  double Uniform01();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform01(); }
  double Normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ffuse
