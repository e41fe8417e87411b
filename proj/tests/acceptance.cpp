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

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ffuse/error.hpp"
#include "ffuse/fusion.hpp"
#include "ffuse/gradcheck.hpp"
#include "ffuse/io.hpp"
#include "ffuse/refine_loss.hpp"
#include "ffuse/synth.hpp"
#include "ffuse/trainer.hpp"

namespace {

using namespace ffuse;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

int g_failures = 0;

void Report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

template <typename Fn>
void Criterion(const char* name, Fn&& fn) {
  try {
    std::string detail;
    const bool ok = fn(detail);
    Report(name, ok, detail);
  } catch (const std::exception& e) {
    Report(name, false, std::string("exception: ") + e.what());
  }
}

std::string Fmt(const char* format, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Matrix Uniform(std::mt19937_64& gen, std::ptrdiff_t rows, std::ptrdiff_t cols) {
  std::uniform_real_distribution<double> dist(-3, 3);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(gen);
  return m;
}

std::vector<TrainExample> MechanismData() {
  SynthSpec spec;
  spec.frames = 10000;
  spec.k1 = spec.k2 = spec.paired_dims = 32;
  spec.rho = 0.65;
  auto [u, v] = GeneratePair(spec);
  return {TrainExample{u, v, Matrix()}};
}

FusionConfig MechanismFusion(double lambda, double epsilon) {
  FusionConfig f;
  f.common_dim = 16;
  f.lambda = lambda;
  f.epsilon = epsilon;
  return f;
}

TrainConfig MechanismTrain() {
  TrainConfig t;
  t.task_weight = 0.0;
  t.init = InitMode::kMirrored;
  return t;
}

bool SameBits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

int main() {
  const auto data = MechanismData();

  Criterion("decorrelation_mechanism", [&](std::string& d) {
    const auto start = Clock::now();
    const TrainReport r = Train(data, MechanismFusion(0.3, 0.2), MechanismTrain());
    const double secs = Seconds(start);
    d = Fmt("initial max|c| %.4f (>= 0.55), final max|c| %.4f (<= 0.25), %.1f s (< 60)",
            r.max_abs_corr_initial, r.max_abs_corr_final, secs);
    return r.max_abs_corr_initial >= 0.55 && r.max_abs_corr_final <= 0.25 && secs < 60;
  });

  Criterion("fsc_preset_masking", [&](std::string& d) {
    const FusionConfig f = MechanismFusion(0.005, 0.6);
    const TrainConfig t = MechanismTrain();
    const std::set<std::int64_t> audited = {0, t.steps / 2, t.steps - 1};
    int audits = 0;
    long masked = 0;
    long active = 0;
    long violations = 0;
    const TrainReport r = Train(data, f, t, [&](const StepAudit& a) {
      if (audited.count(a.step) == 0) return;
      ++audits;
      for (std::size_t b = 0; b < a.correlations.size(); ++b) {
        const Matrix& c = a.correlations[b].data();
        const Matrix& g = a.refine_grad_c[b];
        for (Eigen::Index i = 0; i < c.size(); ++i) {
          if (std::abs(c.data()[i]) <= f.epsilon) {
            ++masked;
            if (g.data()[i] != 0.0) ++violations;
          } else if (g.data()[i] == 2 * c.data()[i]) {
            ++active;
          }
        }
      }
    });
    Matrix kept = r.final_corr.data();
    for (Eigen::Index i = 0; i < kept.size(); ++i) {
      if (std::abs(kept.data()[i]) <= f.epsilon) kept.data()[i] = 0.0;
    }
    const double full = RefineLoss(r.final_corr, f.epsilon);
    const double unmasked_only = RefineLoss(CorrelationMatrix(kept), f.epsilon);
    d = "audited steps " + std::to_string(audits) + ", masked entries " +
        std::to_string(masked) + ", active entries " + std::to_string(active) +
        ", nonzero masked grads " + std::to_string(violations) +
        Fmt(", final refine loss %.6g vs unmasked-only %.6g", full, unmasked_only);
    return audits == 3 && masked > 0 && active > 0 && violations == 0 && full == unmasked_only;
  });

  Criterion("gradient_audit", [&](std::string& d) {
    const auto start = Clock::now();
    double worst = 0;
    int checked = 0;
    std::set<std::string> ops;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      for (const GradCheckResult& r : RunGradientAudit(seed, 1e-4)) {
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
        ops.insert(r.name);
      }
    }
    const double secs = Seconds(start);
    d = Fmt("max rel error %.3e (< 1e-4) over %.0f entries", worst, checked) + ", " +
        std::to_string(ops.size()) + " operations" + Fmt(", %.2f s (< 10)", secs);
    return worst < 1e-4 && secs < 10 && ops.size() >= 10;
  });

  Criterion("refine_loss_hand_values", [&](std::string& d) {
    Matrix m(2, 2);
    m << 0.5, 0.1, -0.3, 0.2;
    const CorrelationMatrix c(m);
    const double a = RefineLoss(c, 0.2);
    const double b = RefineLoss(c, 0.6);
    const double z = RefineLoss(c, 0.0);
    d = Fmt("eps 0.2 -> %.17g, eps 0.6 -> %.17g, eps 0 -> %.17g", a, b, z);
    return std::abs(a - 0.34) <= 1e-15 && b == 0.0 && std::abs(z - 0.39) <= 1e-15;
  });

  Criterion("correlation_bounded", [&](std::string& d) {
    std::mt19937_64 gen(2024);
    std::uniform_int_distribution<int> dim(1, 12);
    std::uniform_int_distribution<int> frames(2, 60);
    double worst = 0;
    double diag_err = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int t = frames(gen);
      const int k = dim(gen);
      const Matrix u = Uniform(gen, t, k);
      Matrix v = Uniform(gen, t, k);
      if (trial % 3 == 0) v = 2.5 * u + Matrix::Constant(t, k, 1.0);
      worst = std::max(worst, CrossCorrelation(u, v).data().cwiseAbs().maxCoeff());
      const Matrix self = CrossCorrelation(u, u).data();
      diag_err = std::max(diag_err, (self.diagonal().array() - 1.0).abs().maxCoeff());
    }
    d = Fmt("max |c| %.17g (<= 1 + 1e-9), max |diag(C(u,u)) - 1| %.3e", worst, diag_err);
    return worst <= 1 + 1e-9 && diag_err <= 1e-9;
  });

  Criterion("shape_contracts", [&](std::string& d) {
    const FusionConfig defaults;
    const std::ptrdiff_t k1 = 40, k2 = 24, t = 7;
    const FeatureMatrix u(Matrix::Random(t, k1), 10), v(Matrix::Random(t, k2), 10);
    std::string dims;
    bool ok = defaults.common_dim == 100 && defaults.output_dim == 80;
    const struct {
      FusionMethod m;
      std::ptrdiff_t want;
    } cases[] = {{FusionMethod::kConcat, k1 + k2},
                 {FusionMethod::kLinearProjection, 2 * defaults.common_dim},
                 {FusionMethod::kWeightedSum, defaults.common_dim}};
    for (const auto& c : cases) {
      FusionConfig f = defaults;
      f.method = c.m;
      const FusionModel model = MakeFusionModel(f, k1, k2, 1);
      const FeatureMatrix fused = Fuse(model, u, v);
      const FeatureMatrix out = FuseAndProject(model, u, v);
      ok = ok && fused.dims() == c.want && fused.frames() == t && out.dims() == 80 &&
           out.frames() == t;
      dims += std::string(ToString(c.m)) + "=" + std::to_string(fused.dims()) + "->" +
              std::to_string(out.dims()) + " ";
    }
    d = dims + "(K=" + std::to_string(defaults.common_dim) +
        ", output=" + std::to_string(defaults.output_dim) + ")";
    return ok;
  });

  Criterion("weighted_sum_invariances", [&](std::string& d) {
    std::mt19937_64 gen(7);
    const Matrix nu = Uniform(gen, 9, 5), nv = Uniform(gen, 9, 5);
    double scale_err = 0;
    for (double alpha : {0.1, 0.6, 2.0}) {
      for (double beta : {0.05, 0.9, 3.0}) {
        ScalarGate g{alpha, beta};
        const Matrix base = WeightedCombine(g, nu, nv);
        for (double c : {1e-3, 0.5, 7.0, 1e3}) {
          ScalarGate s{c * alpha, c * beta};
          scale_err = std::max(scale_err, (WeightedCombine(s, nu, nv) - base).cwiseAbs().maxCoeff());
        }
      }
    }
    double avg_err = 0;
    for (double a : {0.01, 1.0, 42.0}) {
      ScalarGate g{a, a};
      avg_err = std::max(avg_err, (WeightedCombine(g, nu, nv) - 0.5 * (nu + nv)).cwiseAbs().maxCoeff());
    }
    d = Fmt("scale error %.3e, equal-gate vs average %.3e (both <= 1e-12)", scale_err, avg_err);
    return scale_err <= 1e-12 && avg_err <= 1e-12;
  });

  Criterion("gradient_routing", [&](std::string& d) {
    long nonzero = 0;
    int steps = 0;
    bool unchanged = true;
    for (FusionMethod m : {FusionMethod::kLinearProjection, FusionMethod::kWeightedSum}) {
      FusionConfig f = MechanismFusion(0.3, 0.2);
      f.method = m;
      TrainConfig t = MechanismTrain();
      t.steps = 300;
      const FusionModel init = MakeFusionModel(f, 32, 32, t.seed, t.init);
      const TrainReport r = Train(data, f, t, [&](const StepAudit& a) {
        ++steps;
        nonzero += (a.model.output.grad.weight.array() != 0.0).count();
        nonzero += (a.model.output.grad.bias.array() != 0.0).count();
        nonzero += a.model.gate.grad_alpha != 0.0;
        nonzero += a.model.gate.grad_beta != 0.0;
      });
      unchanged = unchanged && SameBits(r.model.output.weight, init.output.weight) &&
                  SameBits(r.model.output.bias, init.output.bias);
    }
    d = "steps observed " + std::to_string(steps) + ", nonzero output/gate grad entries " +
        std::to_string(nonzero) + ", output projection unchanged " +
        (unchanged ? "yes" : "no");
    return steps == 600 && nonzero == 0 && unchanged;
  });

  Criterion("determinism_round_trips", [&](std::string& d) {
    SynthSpec spec;
    spec.frames = 800;
    spec.k1 = spec.k2 = spec.paired_dims = 8;
    spec.seed = 5;
    auto [u1, v1] = GeneratePair(spec);
    auto [u2, v2] = GeneratePair(spec);
    const bool synth_same = SameBits(u1.data(), u2.data()) && SameBits(v1.data(), v2.data());

    FusionConfig f;
    f.method = FusionMethod::kWeightedSum;
    f.common_dim = 6;
    f.output_dim = 4;
    TrainConfig t;
    t.steps = 150;
    t.seed = 11;
    t.shuffle = true;
    const std::vector<TrainExample> ex = {TrainExample{u1, v1, Matrix::Random(800, 4)}};
    const TrainReport a = Train(ex, f, t);
    const TrainReport b = Train(ex, f, t);
    const bool run_same = StepHistoryCsv(a.history) == StepHistoryCsv(b.history) &&
                          SerializeModel(a.model) == SerializeModel(b.model) &&
                          CorrelationCsv(a.final_corr.data()) == CorrelationCsv(b.final_corr.data()) &&
                          CorrelationPgm(a.final_corr.data()) == CorrelationPgm(b.final_corr.data());

    const fs::path dir = fs::temp_directory_path() / ("ffuse_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    Matrix fv = u1.data();
    for (Eigen::Index i = 0; i < fv.size(); ++i) fv.data()[i] = static_cast<float>(fv.data()[i]);
    const FeatureMatrix fm(fv, u1.stride_ms());
    WriteFeatureFile(dir / "u.ffe", fm);
    const FeatureMatrix back = ReadFeatureFile(dir / "u.ffe");
    const bool feat_same = SameBits(back.data(), fm.data()) && back.stride_ms() == fm.stride_ms();
    WriteCorrelationCsv(dir / "c.csv", a.final_corr.data());
    const bool csv_same = SameBits(ReadMatrixCsv(dir / "c.csv"), a.final_corr.data());
    fs::remove_all(dir);

    d = std::string("synth ") + (synth_same ? "identical" : "differs") + ", training runs " +
        (run_same ? "byte-identical" : "differ") + ", feature file " +
        (feat_same ? "lossless" : "lossy") + ", CSV " + (csv_same ? "lossless" : "lossy");
    return synth_same && run_same && feat_same && csv_same;
  });

  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
