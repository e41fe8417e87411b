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

#include "ffuse/fusion.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "ffuse/error.hpp"
#include "ffuse/random.hpp"

namespace ffuse {

namespace {

constexpr double kMinGateSum = 1e-8;

// Seed streams for parameter initialization.
constexpr std::uint32_t kStreamProjU = 1;
constexpr std::uint32_t kStreamProjV = 2;
constexpr std::uint32_t kStreamOutput = 3;

void CheckPairRows(const FeatureMatrix& u, const FeatureMatrix& v) {
  if (u.frames() != v.frames()) {
    std::ostringstream os;
    os << "row-count mismatch: " << u.frames() << " vs " << v.frames();
    Fail(ErrorKind::kShapeMismatch, os.str());
  }
  if (u.stride_ms() != v.stride_ms()) {
    std::ostringstream os;
    os << "stride mismatch: " << u.stride_ms() << " ms vs " << v.stride_ms() << " ms";
    Fail(ErrorKind::kShapeMismatch, os.str());
  }
}

void CheckSameOut(const AffineProjection& pu, const AffineProjection& pv) {
  if (pu.out_dim() != pv.out_dim()) {
    std::ostringstream os;
    os << "projections disagree on common dim: " << pu.out_dim() << " vs "
       << pv.out_dim();
    Fail(ErrorKind::kShapeMismatch, os.str());
  }
}

Matrix Hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

AffineProjection::AffineProjection(Matrix w, RowVector b)
    : weight(std::move(w)), bias(std::move(b)) {
  if (weight.rows() < 1 || weight.cols() < 1) {
    Fail(ErrorKind::kInvalidArgument, "affine projection needs Kin >= 1 and K >= 1");
  }
  if (bias.size() != weight.cols()) {
    std::ostringstream os;
    os << "bias has " << bias.size() << " entries, weight has " << weight.cols()
       << " columns";
    Fail(ErrorKind::kShapeMismatch, os.str());
  }
  CheckFinite(weight, "affine weight");
  CheckFinite(bias, "affine bias");
  grad.weight = Matrix::Zero(weight.rows(), weight.cols());
  grad.bias = RowVector::Zero(bias.size());
}

AffineProjection AffineProjection::Init(std::ptrdiff_t in_dim, std::ptrdiff_t out_dim,
                                        std::uint64_t seed, std::uint32_t stream) {
  if (in_dim < 1 || out_dim < 1) {
    Fail(ErrorKind::kInvalidArgument, "affine projection needs Kin >= 1 and K >= 1");
  }
  Rng rng(seed, stream);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  Matrix w(in_dim, out_dim);
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.Uniform(-bound, bound);
  }
  return AffineProjection(std::move(w), RowVector::Zero(out_dim));
}

std::string_view ToString(FusionMethod m) {
  switch (m) {
    case FusionMethod::kConcat: return "concat";
    case FusionMethod::kLinearProjection: return "lp";
    case FusionMethod::kWeightedSum: return "wsum";
  }
  return "?";
}

FusionMethod ParseFusionMethod(std::string_view s) {
  if (s == "concat") return FusionMethod::kConcat;
  if (s == "lp" || s == "linear_projection") return FusionMethod::kLinearProjection;
  if (s == "wsum" || s == "weighted_sum") return FusionMethod::kWeightedSum;
  Fail(ErrorKind::kInvalidArgument, "unknown fusion method '" + std::string(s) + "'");
}

std::string_view ToString(InitMode m) {
  return m == InitMode::kMirrored ? "mirrored" : "independent";
}

InitMode ParseInitMode(std::string_view s) {
  if (s == "independent") return InitMode::kIndependent;
  if (s == "mirrored") return InitMode::kMirrored;
  Fail(ErrorKind::kInvalidArgument, "unknown init mode '" + std::string(s) + "'");
}

void FusionConfig::Validate() const {
  if (common_dim < 1) Fail(ErrorKind::kInvalidArgument, "common dim must be >= 1");
  if (output_dim < 1) Fail(ErrorKind::kInvalidArgument, "output dim must be >= 1");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    Fail(ErrorKind::kInvalidArgument, "epsilon must lie in [0, 1]");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    Fail(ErrorKind::kInvalidArgument, "lambda must be a nonnegative finite number");
  }
}

Matrix AffineForward(const AffineProjection& p, const Matrix& x) {
  if (x.cols() != p.in_dim()) {
    std::ostringstream os;
    os << "affine input has " << x.cols() << " dims, projection expects "
       << p.in_dim();
    Fail(ErrorKind::kShapeMismatch, os.str());
  }
  Matrix out = x * p.weight;
  out.rowwise() += p.bias;
  return out;
}

FeatureMatrix AffineForward(const AffineProjection& p, const FeatureMatrix& x) {
  return FeatureMatrix(AffineForward(p, x.data()), x.stride_ms());
}

Matrix AffineBackward(const AffineProjection& p, const Matrix& x,
                      const Matrix& upstream, AffineGrad& accum) {
  if (x.cols() != p.in_dim() || upstream.cols() != p.out_dim() ||
      upstream.rows() != x.rows()) {
    std::ostringstream os;
    os << "affine backward: input " << x.rows() << "x" << x.cols() << ", upstream "
       << upstream.rows() << "x" << upstream.cols() << ", projection " << p.in_dim()
       << "->" << p.out_dim();
    Fail(ErrorKind::kShapeMismatch, os.str());
  }
  accum.weight.noalias() += x.transpose() * upstream;
  accum.bias += upstream.colwise().sum();
  return upstream * p.weight.transpose();
}

Matrix AffineBackward(AffineProjection& p, const Matrix& x, const Matrix& upstream) {
  return AffineBackward(p, x, upstream, p.grad);
}

FeatureMatrix FuseConcat(const FeatureMatrix& u, const FeatureMatrix& v) {
  CheckPairRows(u, v);
  return FeatureMatrix(Hcat(MeanNormalize(u.data()), MeanNormalize(v.data())),
                       u.stride_ms());
}

std::pair<Matrix, Matrix> ConcatBackward(const Matrix& upstream, std::ptrdiff_t k1) {
  if (k1 < 1 || k1 >= upstream.cols()) {
    Fail(ErrorKind::kShapeMismatch, "concat backward: split point out of range");
  }
  return {MeanNormalizeBackward(upstream.leftCols(k1)),
          MeanNormalizeBackward(upstream.rightCols(upstream.cols() - k1))};
}

FeatureMatrix FuseLinearProjection(const AffineProjection& pu, const AffineProjection& pv,
                                   const FeatureMatrix& u, const FeatureMatrix& v) {
  CheckPairRows(u, v);
  CheckSameOut(pu, pv);
  return FeatureMatrix(Hcat(MeanNormalize(AffineForward(pu, u.data())),
                            MeanNormalize(AffineForward(pv, v.data()))),
                       u.stride_ms());
}

std::pair<Matrix, Matrix> LinearProjectionBackward(AffineProjection& pu,
                                                   AffineProjection& pv,
                                                   const Matrix& u, const Matrix& v,
                                                   const Matrix& upstream) {
  CheckSameOut(pu, pv);
  const std::ptrdiff_t k = pu.out_dim();
  if (upstream.cols() != 2 * k) {
    Fail(ErrorKind::kShapeMismatch, "linear projection backward: upstream width != 2K");
  }
  const Matrix du_t = MeanNormalizeBackward(upstream.leftCols(k));
  const Matrix dv_t = MeanNormalizeBackward(upstream.rightCols(k));
  return {AffineBackward(pu, u, du_t), AffineBackward(pv, v, dv_t)};
}

void CheckGate(const ScalarGate& g) {
  if (!std::isfinite(g.alpha) || !std::isfinite(g.beta) ||
      std::abs(g.alpha + g.beta) < kMinGateSum) {
    std::ostringstream os;
    os << "degenerate gate: alpha=" << g.alpha << " beta=" << g.beta;
    Fail(ErrorKind::kInvalidArgument, os.str());
  }
}

Matrix WeightedCombine(const ScalarGate& g, const Matrix& nu, const Matrix& nv) {
  CheckGate(g);
  const double s = g.alpha + g.beta;
  return (g.alpha * nu + g.beta * nv) / s;
}

FeatureMatrix FuseWeightedSum(const AffineProjection& pu, const AffineProjection& pv,
                              const ScalarGate& g, const FeatureMatrix& u,
                              const FeatureMatrix& v) {
  CheckPairRows(u, v);
  CheckSameOut(pu, pv);
  return FeatureMatrix(WeightedCombine(g, MeanNormalize(AffineForward(pu, u.data())),
                                       MeanNormalize(AffineForward(pv, v.data()))),
                       u.stride_ms());
}

std::pair<Matrix, Matrix> WeightedCombineBackward(ScalarGate& g, const Matrix& nu,
                                                  const Matrix& nv,
                                                  const Matrix& upstream) {
  CheckGate(g);
  const double s = g.alpha + g.beta;
  const Matrix x = (g.alpha * nu + g.beta * nv) / s;
  // dX/dalpha = (nu - X) / s, dX/dbeta = (nv - X) / s.
  g.grad_alpha += (upstream.array() * (nu - x).array()).sum() / s;
  g.grad_beta += (upstream.array() * (nv - x).array()).sum() / s;
  return {(g.alpha / s) * upstream, (g.beta / s) * upstream};
}

std::pair<Matrix, Matrix> WeightedSumBackward(AffineProjection& pu, AffineProjection& pv,
                                              ScalarGate& g, const Matrix& u,
                                              const Matrix& v, const Matrix& upstream) {
  CheckSameOut(pu, pv);
  const Matrix nu = MeanNormalize(AffineForward(pu, u));
  const Matrix nv = MeanNormalize(AffineForward(pv, v));
  auto [dnu, dnv] = WeightedCombineBackward(g, nu, nv, upstream);
  return {AffineBackward(pu, u, MeanNormalizeBackward(dnu)),
          AffineBackward(pv, v, MeanNormalizeBackward(dnv))};
}

std::ptrdiff_t FusedDim(const FusionConfig& config, std::ptrdiff_t k1, std::ptrdiff_t k2) {
  switch (config.method) {
    case FusionMethod::kConcat: return k1 + k2;
    case FusionMethod::kLinearProjection: return 2 * config.common_dim;
    case FusionMethod::kWeightedSum: return config.common_dim;
  }
  return 0;
}

void FusionModel::ZeroGrad() {
  if (proj_u) proj_u->ZeroGrad();
  if (proj_v) proj_v->ZeroGrad();
  gate.ZeroGrad();
  output.ZeroGrad();
}

FusionModel MakeFusionModel(const FusionConfig& config, std::ptrdiff_t k1,
                            std::ptrdiff_t k2, std::uint64_t seed, InitMode init) {
  config.Validate();
  if (k1 < 1 || k2 < 1) Fail(ErrorKind::kInvalidArgument, "stream dims must be >= 1");
  const std::ptrdiff_t fused = FusedDim(config, k1, k2);
  FusionModel model{config, k1, k2, std::nullopt, std::nullopt, ScalarGate{},
                    AffineProjection::Init(fused, config.output_dim, seed, kStreamOutput)};
  if (config.method != FusionMethod::kConcat) {
    if (init == InitMode::kMirrored && k1 != k2) {
      Fail(ErrorKind::kInvalidArgument, "mirrored init requires equal stream dims");
    }
    model.proj_u = AffineProjection::Init(k1, config.common_dim, seed, kStreamProjU);
    model.proj_v = AffineProjection::Init(
        k2, config.common_dim, seed,
        init == InitMode::kMirrored ? kStreamProjU : kStreamProjV);
  }
  return model;
}

FeatureMatrix Fuse(const FusionModel& model, const FeatureMatrix& u,
                   const FeatureMatrix& v) {
  if (u.dims() != model.k1 || v.dims() != model.k2) {
    std::ostringstream os;
    os << "model expects stream dims (" << model.k1 << ", " << model.k2 << "), got ("
       << u.dims() << ", " << v.dims() << ")";
    Fail(ErrorKind::kShapeMismatch, os.str());
  }
  switch (model.config.method) {
    case FusionMethod::kConcat: return FuseConcat(u, v);
    case FusionMethod::kLinearProjection:
      return FuseLinearProjection(*model.proj_u, *model.proj_v, u, v);
    case FusionMethod::kWeightedSum:
      return FuseWeightedSum(*model.proj_u, *model.proj_v, model.gate, u, v);
  }
  Fail(ErrorKind::kInvalidArgument, "unknown fusion method");
}

FeatureMatrix FuseAndProject(const FusionModel& model, const FeatureMatrix& u,
                             const FeatureMatrix& v) {
  return AffineForward(model.output, Fuse(model, u, v));
}

}  // namespace ffuse
