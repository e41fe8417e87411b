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

#include "ffuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ffuse/error.hpp"
#include "ffuse/random.hpp"

namespace ffuse {

namespace {

constexpr std::uint32_t kStreamU = 1;
constexpr std::uint32_t kStreamNoise = 2;

}  // namespace

void SynthSpec::Validate() const {
  std::ostringstream os;
  if (frames < 1) os << "frames must be >= 1; ";
  if (k1 < 1 || k2 < 1) os << "stream dims must be >= 1; ";
  if (!(std::abs(rho) < 1.0)) os << "rho must satisfy |rho| < 1; ";
  if (paired_dims < 0 || paired_dims > std::min(k1, k2)) {
    os << "paired_dims must lie in [0, min(k1, k2)]; ";
  }
  if (!(stride_ms_u > 0.0) || !(stride_ms_v > 0.0)) os << "strides must be positive; ";
  const std::string msg = os.str();
  if (!msg.empty()) {
    Fail(ErrorKind::kInvalidArgument, "invalid synth spec: " + msg.substr(0, msg.size() - 2));
  }
}

std::pair<FeatureMatrix, FeatureMatrix> GeneratePair(const SynthSpec& spec) {
  spec.Validate();
  const std::ptrdiff_t t = spec.frames;
  Rng rng_u(spec.seed, kStreamU);
  Rng rng_n(spec.seed, kStreamNoise);

  Matrix u(t, spec.k1);
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    for (Eigen::Index r = 0; r < t; ++r) u(r, c) = rng_u.Normal();
  }
  const double noise_scale = std::sqrt(1.0 - spec.rho * spec.rho);
  Matrix v(t, spec.k2);
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    const bool paired = c < spec.paired_dims;
    for (Eigen::Index r = 0; r < t; ++r) {
      const double n = rng_n.Normal();
      v(r, c) = paired ? spec.rho * u(r, c) + noise_scale * n : n;
    }
  }

  const double fine = std::min(spec.stride_ms_u, spec.stride_ms_v);
  FeatureMatrix fu(std::move(u), fine);
  FeatureMatrix fv(std::move(v), fine);
  return {Downsample(fu, spec.stride_ms_u), Downsample(fv, spec.stride_ms_v)};
}

}  // namespace ffuse
