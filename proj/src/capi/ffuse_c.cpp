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

#include "ffuse/ffuse.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <limits>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "ffuse/error.hpp"
#include "ffuse/feature.hpp"
#include "ffuse/fusion.hpp"
#include "ffuse/gradcheck.hpp"
#include "ffuse/io.hpp"
#include "ffuse/refine_loss.hpp"
#include "ffuse/synth.hpp"
#include "ffuse/trainer.hpp"

struct ffuse_features {
  ffuse::FeatureMatrix value;
};

struct ffuse_corr {
  ffuse::CorrelationMatrix value;
};

struct ffuse_model {
  ffuse::FusionModel value;
};

struct ffuse_report {
  ffuse::TrainReport value;
};

struct ffuse_manifest {
  ffuse::RunManifest value;
};

namespace {

thread_local std::string g_last_error;

struct BufferTooSmall {
  std::string message;
};

ffuse_status ToStatus(ffuse::ErrorKind kind) {
  switch (kind) {
    case ffuse::ErrorKind::kInvalidArgument: return FFUSE_ERR_INVALID_ARGUMENT;
    case ffuse::ErrorKind::kShapeMismatch: return FFUSE_ERR_SHAPE;
    case ffuse::ErrorKind::kNonFinite: return FFUSE_ERR_NON_FINITE;
    case ffuse::ErrorKind::kIo: return FFUSE_ERR_IO;
    case ffuse::ErrorKind::kFormat: return FFUSE_ERR_FORMAT;
    case ffuse::ErrorKind::kDiverged: return FFUSE_ERR_DIVERGED;
  }
  return FFUSE_ERR_INTERNAL;
}

ffuse_status SetError(ffuse_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <typename Fn>
ffuse_status Guard(Fn&& fn) {
  try {
    fn();
    return FFUSE_OK;
  } catch (const ffuse::Error& e) {
    return SetError(ToStatus(e.kind()), e.what());
  } catch (const BufferTooSmall& e) {
    return SetError(FFUSE_ERR_BUFFER_TOO_SMALL, e.message);
  } catch (const std::bad_alloc&) {
    return SetError(FFUSE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return SetError(FFUSE_ERR_INTERNAL, e.what());
  }
}

void Require(bool cond, const char* what) {
  if (!cond) ffuse::Fail(ffuse::ErrorKind::kInvalidArgument, what);
}

ffuse::DownsampleMode ToMode(ffuse_downsample_mode m) {
  Require(m == FFUSE_DOWNSAMPLE_AVERAGE || m == FFUSE_DOWNSAMPLE_STRIDE,
          "unknown downsample mode");
  return m == FFUSE_DOWNSAMPLE_STRIDE ? ffuse::DownsampleMode::kStride
                                      : ffuse::DownsampleMode::kAveragePool;
}

ffuse::FusionMethod ToMethod(ffuse_method m) {
  switch (m) {
    case FFUSE_METHOD_CONCAT: return ffuse::FusionMethod::kConcat;
    case FFUSE_METHOD_LINEAR_PROJECTION: return ffuse::FusionMethod::kLinearProjection;
    case FFUSE_METHOD_WEIGHTED_SUM: return ffuse::FusionMethod::kWeightedSum;
  }
  ffuse::Fail(ffuse::ErrorKind::kInvalidArgument, "unknown fusion method");
}

ffuse_method FromMethod(ffuse::FusionMethod m) {
  switch (m) {
    case ffuse::FusionMethod::kConcat: return FFUSE_METHOD_CONCAT;
    case ffuse::FusionMethod::kLinearProjection: return FFUSE_METHOD_LINEAR_PROJECTION;
    case ffuse::FusionMethod::kWeightedSum: return FFUSE_METHOD_WEIGHTED_SUM;
  }
  return FFUSE_METHOD_LINEAR_PROJECTION;
}

ffuse::InitMode ToInit(ffuse_init_mode m) {
  Require(m == FFUSE_INIT_INDEPENDENT || m == FFUSE_INIT_MIRRORED, "unknown init mode");
  return m == FFUSE_INIT_MIRRORED ? ffuse::InitMode::kMirrored
                                  : ffuse::InitMode::kIndependent;
}

ffuse::FusionConfig ToFusionConfig(const ffuse_fusion_config* c) {
  Require(c != nullptr, "fusion config is null");
  ffuse::FusionConfig cfg;
  cfg.method = ToMethod(c->method);
  cfg.common_dim = c->common_dim;
  cfg.output_dim = c->output_dim;
  cfg.epsilon = c->epsilon;
  cfg.lambda = c->lambda;
  cfg.Validate();
  return cfg;
}

void FromFusionConfig(const ffuse::FusionConfig& cfg, ffuse_fusion_config* out) {
  out->method = FromMethod(cfg.method);
  out->common_dim = static_cast<uint32_t>(cfg.common_dim);
  out->output_dim = static_cast<uint32_t>(cfg.output_dim);
  out->epsilon = cfg.epsilon;
  out->lambda = cfg.lambda;
}

ffuse::TrainConfig ToTrainConfig(const ffuse_train_config* c) {
  Require(c != nullptr, "train config is null");
  Require(c->optimizer == FFUSE_OPT_SGD || c->optimizer == FFUSE_OPT_ADAM,
          "unknown optimizer");
  ffuse::TrainConfig cfg;
  cfg.steps = c->steps;
  cfg.learning_rate = c->learning_rate;
  cfg.warmup_steps = c->warmup_steps;
  cfg.batch_size = c->batch_size;
  cfg.seed = c->seed;
  cfg.optimizer = c->optimizer == FFUSE_OPT_SGD ? ffuse::OptimizerKind::kSgd
                                                : ffuse::OptimizerKind::kAdam;
  cfg.init = ToInit(c->init);
  cfg.task_weight = c->task_weight;
  cfg.shuffle = c->shuffle != 0;
  cfg.audit_first_step = c->audit_first_step != 0;
  return cfg;
}

void CopyOut(const ffuse::Matrix& m, double* out, size_t capacity) {
  Require(out != nullptr, "output buffer is null");
  const auto n = static_cast<size_t>(m.size());
  if (capacity < n) {
    throw BufferTooSmall{"output buffer holds " + std::to_string(capacity) +
                         " values, need " + std::to_string(n)};
  }
  std::memcpy(out, m.data(), n * sizeof(double));
}

ffuse_features* Wrap(ffuse::FeatureMatrix m) { return new ffuse_features{std::move(m)}; }

}  // namespace

extern "C" {

const char* ffuse_last_error(void) { return g_last_error.c_str(); }

const char* ffuse_status_name(ffuse_status status) {
  switch (status) {
    case FFUSE_OK: return "ok";
    case FFUSE_ERR_INVALID_ARGUMENT: return "invalid argument";
    case FFUSE_ERR_SHAPE: return "shape mismatch";
    case FFUSE_ERR_NON_FINITE: return "non-finite value";
    case FFUSE_ERR_IO: return "i/o error";
    case FFUSE_ERR_FORMAT: return "format error";
    case FFUSE_ERR_DIVERGED: return "diverged";
    case FFUSE_ERR_BUFFER_TOO_SMALL: return "buffer too small";
    case FFUSE_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

const char* ffuse_version(void) { return "1.0.0"; }

ffuse_status ffuse_features_create(const double* data, uint32_t frames, uint32_t dims,
                                   double stride_ms, ffuse_features** out) {
  return Guard([&] {
    Require(data != nullptr && out != nullptr, "null argument");
    ffuse::Matrix m = Eigen::Map<const ffuse::Matrix>(data, frames, dims);
    *out = Wrap(ffuse::FeatureMatrix(std::move(m), stride_ms));
  });
}

ffuse_status ffuse_features_read(const char* path, ffuse_features** out) {
  return Guard([&] {
    Require(path != nullptr && out != nullptr, "null argument");
    *out = Wrap(ffuse::ReadFeatureFile(path));
  });
}

ffuse_status ffuse_features_write(const ffuse_features* f, const char* path) {
  return Guard([&] {
    Require(f != nullptr && path != nullptr, "null argument");
    ffuse::WriteFeatureFile(path, f->value);
  });
}

void ffuse_features_destroy(ffuse_features* f) { delete f; }

uint32_t ffuse_features_frames(const ffuse_features* f) {
  return f ? static_cast<uint32_t>(f->value.frames()) : 0;
}

uint32_t ffuse_features_dims(const ffuse_features* f) {
  return f ? static_cast<uint32_t>(f->value.dims()) : 0;
}

double ffuse_features_stride_ms(const ffuse_features* f) {
  return f ? f->value.stride_ms() : 0.0;
}

ffuse_status ffuse_features_copy_data(const ffuse_features* f, double* out,
                                      size_t capacity) {
  return Guard([&] {
    Require(f != nullptr, "null argument");
    CopyOut(f->value.data(), out, capacity);
  });
}

ffuse_status ffuse_features_mean_normalize(const ffuse_features* f, ffuse_features** out) {
  return Guard([&] {
    Require(f != nullptr && out != nullptr, "null argument");
    *out = Wrap(ffuse::MeanNormalize(f->value));
  });
}

ffuse_status ffuse_features_mean_var_normalize(const ffuse_features* f,
                                               ffuse_features** out) {
  return Guard([&] {
    Require(f != nullptr && out != nullptr, "null argument");
    *out = Wrap(ffuse::MeanVarNormalize(f->value));
  });
}

ffuse_status ffuse_features_downsample(const ffuse_features* f, double target_stride_ms,
                                       ffuse_downsample_mode mode, ffuse_features** out) {
  return Guard([&] {
    Require(f != nullptr && out != nullptr, "null argument");
    *out = Wrap(ffuse::Downsample(f->value, target_stride_ms, ToMode(mode)));
  });
}

ffuse_status ffuse_features_align_pair(const ffuse_features* u, const ffuse_features* v,
                                       ffuse_downsample_mode mode, ffuse_features** out_u,
                                       ffuse_features** out_v) {
  return Guard([&] {
    Require(u && v && out_u && out_v, "null argument");
    auto [au, av] = ffuse::AlignPair(u->value, v->value, ToMode(mode));
    *out_u = Wrap(std::move(au));
    *out_v = Wrap(std::move(av));
  });
}

void ffuse_synth_spec_default(ffuse_synth_spec* spec) {
  if (!spec) return;
  const ffuse::SynthSpec d;
  spec->frames = static_cast<uint32_t>(d.frames);
  spec->k1 = static_cast<uint32_t>(d.k1);
  spec->k2 = static_cast<uint32_t>(d.k2);
  spec->rho = d.rho;
  spec->paired_dims = static_cast<uint32_t>(d.paired_dims);
  spec->seed = d.seed;
  spec->stride_ms_u = d.stride_ms_u;
  spec->stride_ms_v = d.stride_ms_v;
}

ffuse_status ffuse_synth_generate(const ffuse_synth_spec* spec, ffuse_features** out_u,
                                  ffuse_features** out_v) {
  return Guard([&] {
    Require(spec && out_u && out_v, "null argument");
    ffuse::SynthSpec s;
    s.frames = spec->frames;
    s.k1 = spec->k1;
    s.k2 = spec->k2;
    s.rho = spec->rho;
    s.paired_dims = spec->paired_dims;
    s.seed = spec->seed;
    s.stride_ms_u = spec->stride_ms_u;
    s.stride_ms_v = spec->stride_ms_v;
    auto [u, v] = ffuse::GeneratePair(s);
    *out_u = Wrap(std::move(u));
    *out_v = Wrap(std::move(v));
  });
}

ffuse_status ffuse_corr_compute(const ffuse_features* u_t, const ffuse_features* v_t,
                                ffuse_corr** out) {
  return Guard([&] {
    Require(u_t && v_t && out, "null argument");
    *out = new ffuse_corr{ffuse::CrossCorrelation(u_t->value, v_t->value)};
  });
}

void ffuse_corr_destroy(ffuse_corr* c) { delete c; }

uint32_t ffuse_corr_rows(const ffuse_corr* c) {
  return c ? static_cast<uint32_t>(c->value.rows()) : 0;
}

uint32_t ffuse_corr_cols(const ffuse_corr* c) {
  return c ? static_cast<uint32_t>(c->value.cols()) : 0;
}

ffuse_status ffuse_corr_copy_data(const ffuse_corr* c, double* out, size_t capacity) {
  return Guard([&] {
    Require(c != nullptr, "null argument");
    CopyOut(c->value.data(), out, capacity);
  });
}

double ffuse_corr_max_abs(const ffuse_corr* c) { return c ? c->value.MaxAbs() : 0.0; }
double ffuse_corr_mean_abs(const ffuse_corr* c) { return c ? c->value.MeanAbs() : 0.0; }
double ffuse_corr_max_abs_diagonal(const ffuse_corr* c) {
  return c ? c->value.MaxAbsDiagonal() : 0.0;
}

ffuse_status ffuse_corr_export(const ffuse_corr* c, const char* csv_path,
                               const char* pgm_path) {
  return Guard([&] {
    Require(c != nullptr, "null argument");
    ffuse::ExportCorrelation(c->value, csv_path ? csv_path : "", pgm_path ? pgm_path : "");
  });
}

ffuse_status ffuse_refine_loss(const double* c, uint32_t rows, uint32_t cols,
                               double epsilon, double* out_loss) {
  return Guard([&] {
    Require(c && out_loss, "null argument");
    ffuse::CorrelationMatrix m(Eigen::Map<const ffuse::Matrix>(c, rows, cols));
    *out_loss = ffuse::RefineLoss(m, epsilon);
  });
}

ffuse_status ffuse_combined_loss(double task, double refine, double lambda,
                                 ffuse_loss_breakdown* out) {
  return Guard([&] {
    Require(out != nullptr, "null argument");
    const ffuse::LossBreakdown b = ffuse::CombinedLoss(task, refine, lambda);
    *out = ffuse_loss_breakdown{b.task_loss, b.refine_loss, b.total, b.masked_fraction};
  });
}

void ffuse_fusion_config_default(ffuse_fusion_config* cfg) {
  if (cfg) FromFusionConfig(ffuse::FusionConfig{}, cfg);
}

ffuse_status ffuse_fusion_config_preset(const char* name, ffuse_fusion_config* cfg) {
  return Guard([&] {
    Require(name && cfg, "null argument");
    const std::string n(name);
    if (n == "wsj") {
      cfg->lambda = 0.3;
      cfg->epsilon = 0.2;
    } else if (n == "fsc") {
      cfg->lambda = 0.005;
      cfg->epsilon = 0.6;
    } else {
      ffuse::Fail(ffuse::ErrorKind::kInvalidArgument, "unknown preset '" + n + "'");
    }
  });
}

ffuse_status ffuse_method_parse(const char* name, ffuse_method* out) {
  return Guard([&] {
    Require(name && out, "null argument");
    *out = FromMethod(ffuse::ParseFusionMethod(name));
  });
}

ffuse_status ffuse_model_create(const ffuse_fusion_config* cfg, uint32_t k1, uint32_t k2,
                                uint64_t seed, ffuse_init_mode init, ffuse_model** out) {
  return Guard([&] {
    Require(out != nullptr, "null argument");
    *out = new ffuse_model{ffuse::MakeFusionModel(ToFusionConfig(cfg), k1, k2, seed, ToInit(init))};
  });
}

ffuse_status ffuse_model_load(const char* path, ffuse_model** out) {
  return Guard([&] {
    Require(path && out, "null argument");
    *out = new ffuse_model{ffuse::DeserializeModel(ffuse::ReadTextFile(path))};
  });
}

ffuse_status ffuse_model_save(const ffuse_model* m, const char* path) {
  return Guard([&] {
    Require(m && path, "null argument");
    ffuse::WriteTextFile(path, ffuse::SerializeModel(m->value));
  });
}

void ffuse_model_destroy(ffuse_model* m) { delete m; }

uint32_t ffuse_model_fused_dim(const ffuse_model* m) {
  return m ? static_cast<uint32_t>(m->value.fused_dim()) : 0;
}

ffuse_status ffuse_model_config(const ffuse_model* m, ffuse_fusion_config* out) {
  return Guard([&] {
    Require(m && out, "null argument");
    FromFusionConfig(m->value.config, out);
  });
}

ffuse_status ffuse_model_gate(const ffuse_model* m, double* alpha, double* beta) {
  return Guard([&] {
    Require(m && alpha && beta, "null argument");
    *alpha = m->value.gate.alpha;
    *beta = m->value.gate.beta;
  });
}

ffuse_status ffuse_model_fuse(const ffuse_model* m, const ffuse_features* u,
                              const ffuse_features* v, ffuse_features** out) {
  return Guard([&] {
    Require(m && u && v && out, "null argument");
    *out = Wrap(ffuse::Fuse(m->value, u->value, v->value));
  });
}

ffuse_status ffuse_model_fuse_project(const ffuse_model* m, const ffuse_features* u,
                                      const ffuse_features* v, ffuse_features** out) {
  return Guard([&] {
    Require(m && u && v && out, "null argument");
    *out = Wrap(ffuse::FuseAndProject(m->value, u->value, v->value));
  });
}

ffuse_status ffuse_model_project_pair(const ffuse_model* m, const ffuse_features* u,
                                      const ffuse_features* v, ffuse_features** out_u,
                                      ffuse_features** out_v) {
  return Guard([&] {
    Require(m && u && v && out_u && out_v, "null argument");
    Require(m->value.proj_u.has_value(), "concatenation has no stream projections");
    auto pu = ffuse::AffineForward(*m->value.proj_u, u->value);
    auto pv = ffuse::AffineForward(*m->value.proj_v, v->value);
    *out_u = Wrap(std::move(pu));
    *out_v = Wrap(std::move(pv));
  });
}

void ffuse_train_config_default(ffuse_train_config* cfg) {
  if (!cfg) return;
  const ffuse::TrainConfig d;
  cfg->steps = d.steps;
  cfg->learning_rate = d.learning_rate;
  cfg->warmup_steps = d.warmup_steps;
  cfg->batch_size = d.batch_size;
  cfg->seed = d.seed;
  cfg->optimizer = FFUSE_OPT_ADAM;
  cfg->init = FFUSE_INIT_INDEPENDENT;
  cfg->task_weight = d.task_weight;
  cfg->shuffle = 0;
  cfg->audit_first_step = 0;
}

double ffuse_lr_schedule(int64_t step, const ffuse_train_config* cfg) {
  if (!cfg) return std::numeric_limits<double>::quiet_NaN();
  ffuse::TrainConfig c;
  c.learning_rate = cfg->learning_rate;
  c.warmup_steps = cfg->warmup_steps;
  return ffuse::LrSchedule(step, c);
}

ffuse_status ffuse_train(const ffuse_features* const* us, const ffuse_features* const* vs,
                         const ffuse_features* const* targets, size_t count,
                         const ffuse_fusion_config* fusion, const ffuse_train_config* train,
                         ffuse_report** out) {
  return Guard([&] {
    Require(us && vs && out, "null argument");
    const ffuse::FusionConfig fcfg = ToFusionConfig(fusion);
    const ffuse::TrainConfig tcfg = ToTrainConfig(train);
    std::vector<ffuse::TrainExample> data;
    data.reserve(count);
    for (size_t i = 0; i < count; ++i) {
      Require(us[i] && vs[i], "null stream in training data");
      ffuse::Matrix target;
      if (targets && targets[i]) target = targets[i]->value.data();
      data.push_back(ffuse::TrainExample{us[i]->value, vs[i]->value, std::move(target)});
    }
    *out = new ffuse_report{ffuse::Train(data, fcfg, tcfg)};
  });
}

void ffuse_report_destroy(ffuse_report* r) { delete r; }

size_t ffuse_report_steps(const ffuse_report* r) { return r ? r->value.history.size() : 0; }

ffuse_status ffuse_report_step(const ffuse_report* r, size_t step, ffuse_step_record* out) {
  return Guard([&] {
    Require(r && out, "null argument");
    Require(step < r->value.history.size(), "step index out of range");
    const ffuse::StepRecord& s = r->value.history[step];
    out->loss = ffuse_loss_breakdown{s.loss.task_loss, s.loss.refine_loss, s.loss.total,
                                     s.loss.masked_fraction};
    out->lr = s.lr;
    out->max_abs_corr = s.max_abs_corr;
  });
}

double ffuse_report_max_abs_corr_initial(const ffuse_report* r) {
  return r ? r->value.max_abs_corr_initial : 0.0;
}

double ffuse_report_max_abs_corr_final(const ffuse_report* r) {
  return r ? r->value.max_abs_corr_final : 0.0;
}

double ffuse_report_audit_max_rel_error(const ffuse_report* r) {
  if (!r || !r->value.audit_max_rel_error) return std::numeric_limits<double>::quiet_NaN();
  return *r->value.audit_max_rel_error;
}

ffuse_status ffuse_report_initial_corr(const ffuse_report* r, ffuse_corr** out) {
  return Guard([&] {
    Require(r && out, "null argument");
    *out = new ffuse_corr{r->value.initial_corr};
  });
}

ffuse_status ffuse_report_final_corr(const ffuse_report* r, ffuse_corr** out) {
  return Guard([&] {
    Require(r && out, "null argument");
    *out = new ffuse_corr{r->value.final_corr};
  });
}

ffuse_status ffuse_report_model(const ffuse_report* r, ffuse_model** out) {
  return Guard([&] {
    Require(r && out, "null argument");
    *out = new ffuse_model{r->value.model};
  });
}

ffuse_status ffuse_manifest_create(ffuse_manifest** out) {
  return Guard([&] {
    Require(out != nullptr, "null argument");
    *out = new ffuse_manifest{};
  });
}

ffuse_status ffuse_manifest_from_configs(const ffuse_fusion_config* fusion,
                                         const ffuse_train_config* train,
                                         ffuse_manifest** out) {
  return Guard([&] {
    Require(out != nullptr, "null argument");
    *out = new ffuse_manifest{
        ffuse::MakeRunManifest(ToFusionConfig(fusion), ToTrainConfig(train))};
  });
}

ffuse_status ffuse_manifest_read(const char* path, ffuse_manifest** out) {
  return Guard([&] {
    Require(path && out, "null argument");
    *out = new ffuse_manifest{ffuse::RunManifest::Parse(ffuse::ReadTextFile(path))};
  });
}

ffuse_status ffuse_manifest_write(const ffuse_manifest* m, const char* path) {
  return Guard([&] {
    Require(m && path, "null argument");
    ffuse::WriteTextFile(path, m->value.Serialize());
  });
}

void ffuse_manifest_destroy(ffuse_manifest* m) { delete m; }

ffuse_status ffuse_manifest_set(ffuse_manifest* m, const char* key, const char* value) {
  return Guard([&] {
    Require(m && key && value, "null argument");
    m->value.Set(key, value);
  });
}

ffuse_status ffuse_manifest_get(const ffuse_manifest* m, const char* key, char* buf,
                                size_t capacity, size_t* needed) {
  if (!m || !key) return SetError(FFUSE_ERR_INVALID_ARGUMENT, "null argument");
  const std::optional<std::string> v = m->value.Get(key);
  if (!v) return SetError(FFUSE_ERR_INVALID_ARGUMENT, std::string("no manifest key '") + key + "'");
  if (needed) *needed = v->size() + 1;
  if (!buf || capacity < v->size() + 1) {
    return SetError(FFUSE_ERR_BUFFER_TOO_SMALL, "manifest value does not fit the buffer");
  }
  std::memcpy(buf, v->c_str(), v->size() + 1);
  return FFUSE_OK;
}

size_t ffuse_manifest_size(const ffuse_manifest* m) {
  return m ? m->value.entries().size() : 0;
}

ffuse_status ffuse_report_write(const ffuse_report* r, const ffuse_manifest* manifest,
                                const char* dir) {
  return Guard([&] {
    Require(r && dir, "null argument");
    const std::filesystem::path root(dir);
    if (!std::filesystem::is_directory(root)) {
      ffuse::Fail(ffuse::ErrorKind::kIo, "report directory '" + root.string() + "' does not exist");
    }
    const ffuse::TrainReport& rep = r->value;
    if (manifest) ffuse::WriteTextFile(root / "manifest.txt", manifest->value.Serialize());
    ffuse::WriteTextFile(root / "report.txt", ffuse::SummarizeReport(rep).Serialize());
    ffuse::WriteTextFile(root / "steps.csv", ffuse::StepHistoryCsv(rep.history));
    ffuse::ExportCorrelation(rep.initial_corr, root / "corr_initial.csv",
                             root / "corr_initial.pgm");
    ffuse::ExportCorrelation(rep.final_corr, root / "corr_final.csv", root / "corr_final.pgm");
    ffuse::WriteTextFile(root / "params.json", ffuse::SerializeModel(rep.model));
  });
}

ffuse_status ffuse_gradcheck(uint64_t seed, ffuse_gradcheck_entry* entries, size_t capacity,
                             size_t* count, double* max_rel_error) {
  return Guard([&] {
    const std::vector<ffuse::GradCheckResult> results = ffuse::RunGradientAudit(seed);
    double worst = 0.0;
    for (size_t i = 0; i < results.size(); ++i) {
      worst = std::max(worst, results[i].max_rel_error);
      if (entries && i < capacity) {
        ffuse_gradcheck_entry& e = entries[i];
        std::memset(e.name, 0, sizeof(e.name));
        std::strncpy(e.name, results[i].name.c_str(), sizeof(e.name) - 1);
        e.max_rel_error = results[i].max_rel_error;
        e.checked = results[i].checked;
        e.skipped = results[i].skipped;
      }
    }
    if (count) *count = results.size();
    if (max_rel_error) *max_rel_error = worst;
  });
}

}  // extern "C"
