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
#include <optional>
#include <string_view>
#include <utility>

#include "ffuse/feature.hpp"

namespace ffuse {

struct AffineGrad {
  Matrix weight;
  RowVector bias;

  void SetZero() {
    weight.setZero();
    bias.setZero();
  }
};

/// Learnable map x -> x * weight + bias from Kin to K dims, with its own
/// gradient accumulator.
struct AffineProjection {
  Matrix weight;  // Kin x K
  RowVector bias;  // 1 x K
  AffineGrad grad;

  AffineProjection(Matrix w, RowVector b);

  /// Fan-in uniform init in [-1/sqrt(Kin), 1/sqrt(Kin)], zero bias.
  static AffineProjection Init(std::ptrdiff_t in_dim, std::ptrdiff_t out_dim,
                               std::uint64_t seed, std::uint32_t stream);

  std::ptrdiff_t in_dim() const noexcept { return weight.rows(); }
  std::ptrdiff_t out_dim() const noexcept { return weight.cols(); }
  void ZeroGrad() { grad.SetZero(); }
};

/// The two importance scalars of weighted-sum fusion.
struct ScalarGate {
  double alpha = 0.5;
  double beta = 0.5;
  double grad_alpha = 0.0;
  double grad_beta = 0.0;

  void ZeroGrad() { grad_alpha = grad_beta = 0.0; }
};

enum class FusionMethod { kConcat, kLinearProjection, kWeightedSum };

std::string_view ToString(FusionMethod m);
/// Accepts "concat", "lp"/"linear_projection", "wsum"/"weighted_sum".
FusionMethod ParseFusionMethod(std::string_view s);

struct FusionConfig {
  FusionMethod method = FusionMethod::kLinearProjection;
  std::ptrdiff_t common_dim = 100;
  std::ptrdiff_t output_dim = 80;
  double epsilon = 0.2;
  double lambda = 0.3;

  void Validate() const;
};

// Affine transform. Backward accumulates dW += x^T g and db += colsum(g)
// and returns g W^T.
Matrix AffineForward(const AffineProjection& p, const Matrix& x);
FeatureMatrix AffineForward(const AffineProjection& p, const FeatureMatrix& x);
Matrix AffineBackward(AffineProjection& p, const Matrix& x, const Matrix& upstream);
Matrix AffineBackward(const AffineProjection& p, const Matrix& x,
                      const Matrix& upstream, AffineGrad& accum);

/// [norm(u), norm(v)], T x (K1 + K2).
FeatureMatrix FuseConcat(const FeatureMatrix& u, const FeatureMatrix& v);
std::pair<Matrix, Matrix> ConcatBackward(const Matrix& upstream, std::ptrdiff_t k1);

/// [norm(u W1 + b1), norm(v W2 + b2)], T x 2K.
FeatureMatrix FuseLinearProjection(const AffineProjection& pu,
                                   const AffineProjection& pv,
                                   const FeatureMatrix& u, const FeatureMatrix& v);
/// Accumulates into pu, pv and returns the input gradients.
std::pair<Matrix, Matrix> LinearProjectionBackward(AffineProjection& pu,
                                                   AffineProjection& pv,
                                                   const Matrix& u, const Matrix& v,
                                                   const Matrix& upstream);

/// (alpha norm(u W1 + b1) + beta norm(v W2 + b2)) / (alpha + beta), T x K.
/// Fails with "degenerate gate" when |alpha + beta| < 1e-8.
FeatureMatrix FuseWeightedSum(const AffineProjection& pu, const AffineProjection& pv,
                              const ScalarGate& g, const FeatureMatrix& u,
                              const FeatureMatrix& v);
std::pair<Matrix, Matrix> WeightedSumBackward(AffineProjection& pu, AffineProjection& pv,
                                              ScalarGate& g, const Matrix& u,
                                              const Matrix& v, const Matrix& upstream);

/// Combination core of the weighted sum on already-normalized streams.
Matrix WeightedCombine(const ScalarGate& g, const Matrix& nu, const Matrix& nv);
/// Accumulates gate gradients; returns gradients w.r.t. nu and nv.
std::pair<Matrix, Matrix> WeightedCombineBackward(ScalarGate& g, const Matrix& nu,
                                                  const Matrix& nv,
                                                  const Matrix& upstream);
void CheckGate(const ScalarGate& g);

enum class InitMode {
  kIndependent,  // each stream projection drawn from its own stream
  kMirrored,     // both stream projections share one draw (requires K1 == K2)
};

std::string_view ToString(InitMode m);
InitMode ParseInitMode(std::string_view s);

/// Width of the fused representation: K1+K2, 2K or K.
std::ptrdiff_t FusedDim(const FusionConfig& config, std::ptrdiff_t k1, std::ptrdiff_t k2);

/// Stream projections, gate and the final projection to output_dim.
/// proj_u/proj_v are absent for concatenation.
struct FusionModel {
  FusionConfig config;
  std::ptrdiff_t k1 = 0;
  std::ptrdiff_t k2 = 0;
  std::optional<AffineProjection> proj_u;
  std::optional<AffineProjection> proj_v;
  ScalarGate gate;
  AffineProjection output;

  std::ptrdiff_t fused_dim() const { return FusedDim(config, k1, k2); }
  void ZeroGrad();
};

FusionModel MakeFusionModel(const FusionConfig& config, std::ptrdiff_t k1,
                            std::ptrdiff_t k2, std::uint64_t seed,
                            InitMode init = InitMode::kIndependent);

/// Fused features only (before the final projection).
FeatureMatrix Fuse(const FusionModel& model, const FeatureMatrix& u,
                   const FeatureMatrix& v);

/// Fused features mapped through the final projection, T x output_dim.
FeatureMatrix FuseAndProject(const FusionModel& model, const FeatureMatrix& u,
                             const FeatureMatrix& v);

}  // namespace ffuse
