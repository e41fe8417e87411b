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

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <CLI11.hpp>

#include "ffuse/ffuse.h"

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void Check(ffuse_status s) {
  if (s != FFUSE_OK) throw Failure(std::string(ffuse_status_name(s)) + ": " + ffuse_last_error());
}

struct FeaturesDeleter {
  void operator()(ffuse_features* f) const { ffuse_features_destroy(f); }
};
struct CorrDeleter {
  void operator()(ffuse_corr* c) const { ffuse_corr_destroy(c); }
};
struct ModelDeleter {
  void operator()(ffuse_model* m) const { ffuse_model_destroy(m); }
};
struct ReportDeleter {
  void operator()(ffuse_report* r) const { ffuse_report_destroy(r); }
};
struct ManifestDeleter {
  void operator()(ffuse_manifest* m) const { ffuse_manifest_destroy(m); }
};

using Features = std::unique_ptr<ffuse_features, FeaturesDeleter>;
using Corr = std::unique_ptr<ffuse_corr, CorrDeleter>;
using Model = std::unique_ptr<ffuse_model, ModelDeleter>;
using Report = std::unique_ptr<ffuse_report, ReportDeleter>;
using Manifest = std::unique_ptr<ffuse_manifest, ManifestDeleter>;

Features Read(const std::string& path) {
  ffuse_features* f = nullptr;
  Check(ffuse_features_read(path.c_str(), &f));
  return Features(f);
}

std::pair<Features, Features> ReadAligned(const std::string& u_path, const std::string& v_path) {
  Features u = Read(u_path);
  Features v = Read(v_path);
  ffuse_features* au = nullptr;
  ffuse_features* av = nullptr;
  Check(ffuse_features_align_pair(u.get(), v.get(), FFUSE_DOWNSAMPLE_AVERAGE, &au, &av));
  return {Features(au), Features(av)};
}

ffuse_init_mode ParseInit(const std::string& s) {
  if (s == "independent") return FFUSE_INIT_INDEPENDENT;
  if (s == "mirrored") return FFUSE_INIT_MIRRORED;
  throw Failure("unknown init mode '" + s + "'");
}

ffuse_method ParseMethod(const std::string& s) {
  ffuse_method m;
  Check(ffuse_method_parse(s.c_str(), &m));
  return m;
}

std::string Num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// FFUSE_SEED, when set, replaces whatever --seed said.
void ApplySeedOverride(uint64_t& seed) {
  const char* env = std::getenv("FFUSE_SEED");
  if (env == nullptr || *env == '\0') return;
  const std::string s(env);
  uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Failure("FFUSE_SEED is not an unsigned integer: '" + s + "'");
  }
  seed = v;
}

struct GenArgs {
  ffuse_synth_spec spec{};
  std::string out_u, out_v;
};

int RunGen(GenArgs& a) {
  ApplySeedOverride(a.spec.seed);
  ffuse_features* u = nullptr;
  ffuse_features* v = nullptr;
  Check(ffuse_synth_generate(&a.spec, &u, &v));
  Features fu(u), fv(v);
  Check(ffuse_features_write(fu.get(), a.out_u.c_str()));
  Check(ffuse_features_write(fv.get(), a.out_v.c_str()));
  std::printf("wrote %s (%ux%u) and %s (%ux%u)\n", a.out_u.c_str(), ffuse_features_frames(u),
              ffuse_features_dims(u), a.out_v.c_str(), ffuse_features_frames(v),
              ffuse_features_dims(v));
  return 0;
}

struct CorrArgs {
  std::string u, v, csv, pgm, init = "independent";
  uint32_t project = 0;
  uint64_t seed = 0;
};

int RunCorr(CorrArgs& a) {
  ApplySeedOverride(a.seed);
  auto [u, v] = ReadAligned(a.u, a.v);
  if (a.project > 0) {
    ffuse_fusion_config cfg;
    ffuse_fusion_config_default(&cfg);
    cfg.common_dim = a.project;
    ffuse_model* m = nullptr;
    Check(ffuse_model_create(&cfg, ffuse_features_dims(u.get()), ffuse_features_dims(v.get()),
                             a.seed, ParseInit(a.init), &m));
    Model model(m);
    ffuse_features* pu = nullptr;
    ffuse_features* pv = nullptr;
    Check(ffuse_model_project_pair(model.get(), u.get(), v.get(), &pu, &pv));
    u.reset(pu);
    v.reset(pv);
  }
  ffuse_corr* c = nullptr;
  Check(ffuse_corr_compute(u.get(), v.get(), &c));
  Corr corr(c);
  std::printf("shape %ux%u\n", ffuse_corr_rows(c), ffuse_corr_cols(c));
  std::printf("max_abs_corr %s\n", Num(ffuse_corr_max_abs(c)).c_str());
  std::printf("mean_abs_corr %s\n", Num(ffuse_corr_mean_abs(c)).c_str());
  if (ffuse_corr_rows(c) == ffuse_corr_cols(c)) {
    std::printf("max_abs_diag_corr %s\n", Num(ffuse_corr_max_abs_diagonal(c)).c_str());
  }
  Check(ffuse_corr_export(c, a.csv.empty() ? nullptr : a.csv.c_str(),
                          a.pgm.empty() ? nullptr : a.pgm.c_str()));
  return 0;
}

struct FuseArgs {
  std::string method = "lp", u, v, out, params, save_params, init = "independent";
  uint32_t k = 100;
  uint32_t output_dim = 80;
  uint64_t seed = 0;
  bool project_output = false;
};

int RunFuse(FuseArgs& a) {
  ApplySeedOverride(a.seed);
  auto [u, v] = ReadAligned(a.u, a.v);
  ffuse_model* m = nullptr;
  if (!a.params.empty()) {
    Check(ffuse_model_load(a.params.c_str(), &m));
  } else {
    ffuse_fusion_config cfg;
    ffuse_fusion_config_default(&cfg);
    cfg.method = ParseMethod(a.method);
    cfg.common_dim = a.k;
    cfg.output_dim = a.output_dim;
    Check(ffuse_model_create(&cfg, ffuse_features_dims(u.get()), ffuse_features_dims(v.get()),
                             a.seed, ParseInit(a.init), &m));
  }
  Model model(m);
  ffuse_features* out = nullptr;
  if (a.project_output) {
    Check(ffuse_model_fuse_project(model.get(), u.get(), v.get(), &out));
  } else {
    Check(ffuse_model_fuse(model.get(), u.get(), v.get(), &out));
  }
  Features fused(out);
  Check(ffuse_features_write(fused.get(), a.out.c_str()));
  if (!a.save_params.empty()) Check(ffuse_model_save(model.get(), a.save_params.c_str()));
  std::printf("wrote %s (%ux%u)\n", a.out.c_str(), ffuse_features_frames(out),
              ffuse_features_dims(out));
  return 0;
}

struct TrainArgs {
  std::string u, v, target, method = "lp", report, preset, optimizer = "adam",
                                 init = "independent";
  ffuse_fusion_config fusion{};
  ffuse_train_config train{};
  double task_weight = -1.0;
  std::vector<std::string> set;
};

int RunTrain(TrainArgs& a) {
  ApplySeedOverride(a.train.seed);
  a.fusion.method = ParseMethod(a.method);
  if (a.optimizer == "adam") {
    a.train.optimizer = FFUSE_OPT_ADAM;
  } else if (a.optimizer == "sgd") {
    a.train.optimizer = FFUSE_OPT_SGD;
  } else {
    throw Failure("unknown optimizer '" + a.optimizer + "'");
  }
  a.train.init = ParseInit(a.init);
  a.train.task_weight = a.task_weight >= 0.0 ? a.task_weight : (a.target.empty() ? 0.0 : 1.0);

  auto [u, v] = ReadAligned(a.u, a.v);
  Features target;
  if (!a.target.empty()) target = Read(a.target);

  const ffuse_features* us[] = {u.get()};
  const ffuse_features* vs[] = {v.get()};
  const ffuse_features* ts[] = {target.get()};
  ffuse_report* r = nullptr;
  Check(ffuse_train(us, vs, target ? ts : nullptr, 1, &a.fusion, &a.train, &r));
  Report report(r);

  const size_t n = ffuse_report_steps(r);
  if (n > 0) {
    ffuse_step_record last;
    Check(ffuse_report_step(r, n - 1, &last));
    std::printf("final_total_loss %s\n", Num(last.loss.total).c_str());
    std::printf("final_refine_loss %s\n", Num(last.loss.refine_loss).c_str());
  }
  std::printf("max_abs_corr_initial %s\n", Num(ffuse_report_max_abs_corr_initial(r)).c_str());
  std::printf("max_abs_corr_final %s\n", Num(ffuse_report_max_abs_corr_final(r)).c_str());
  const double audit = ffuse_report_audit_max_rel_error(r);
  if (audit == audit) std::printf("audit_max_rel_error %.3e\n", audit);

  if (!a.report.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(a.report, ec);
    if (ec) throw Failure("cannot create report directory '" + a.report + "': " + ec.message());
    ffuse_manifest* mp = nullptr;
    Check(ffuse_manifest_from_configs(&a.fusion, &a.train, &mp));
    Manifest manifest(mp);
    Check(ffuse_manifest_set(mp, "input_u", a.u.c_str()));
    Check(ffuse_manifest_set(mp, "input_v", a.v.c_str()));
    if (!a.target.empty()) Check(ffuse_manifest_set(mp, "input_target", a.target.c_str()));
    Check(ffuse_manifest_set(mp, "report_dir", a.report.c_str()));
    Check(ffuse_report_write(r, mp, a.report.c_str()));
    std::printf("report written to %s\n", a.report.c_str());
  }
  return 0;
}

int RunCheckGrad(uint64_t seed, bool verbose) {
  ApplySeedOverride(seed);
  std::vector<ffuse_gradcheck_entry> entries(64);
  size_t count = 0;
  double worst = 0.0;
  Check(ffuse_gradcheck(seed, entries.data(), entries.size(), &count, &worst));
  if (verbose) {
    for (size_t i = 0; i < count && i < entries.size(); ++i) {
      std::printf("%-24s %.3e  checked=%d skipped=%d\n", entries[i].name,
                  entries[i].max_rel_error, entries[i].checked, entries[i].skipped);
    }
  }
  std::printf("max_rel_error %.3e over %zu checks\n", worst, count);
  if (!(worst < 1e-4)) {
    std::fprintf(stderr, "gradient check failed: %.3e >= 1e-4\n", worst);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ffuse: feature-stream fusion with cross-correlation refinement"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ffuse_version());

  GenArgs gen;
  ffuse_synth_spec_default(&gen.spec);
  auto* g = app.add_subcommand("gen", "generate a correlated synthetic stream pair");
  g->add_option("--T", gen.spec.frames, "frames")->capture_default_str();
  g->add_option("--k1", gen.spec.k1, "dims of u")->capture_default_str();
  g->add_option("--k2", gen.spec.k2, "dims of v")->capture_default_str();
  g->add_option("--rho", gen.spec.rho, "correlation of paired dims")->capture_default_str();
  g->add_option("--paired", gen.spec.paired_dims, "number of paired dims")->capture_default_str();
  g->add_option("--seed", gen.spec.seed)->capture_default_str();
  g->add_option("--stride-u", gen.spec.stride_ms_u, "frame stride of u in ms")
      ->capture_default_str();
  g->add_option("--stride-v", gen.spec.stride_ms_v, "frame stride of v in ms")
      ->capture_default_str();
  g->add_option("--out-u", gen.out_u)->required();
  g->add_option("--out-v", gen.out_v)->required();

  CorrArgs corr;
  auto* c = app.add_subcommand("corr", "cross-correlation of two feature files");
  c->add_option("--u", corr.u)->required();
  c->add_option("--v", corr.v)->required();
  c->add_option("--project", corr.project, "project both streams to K dims first");
  c->add_option("--seed", corr.seed)->capture_default_str();
  c->add_option("--init", corr.init, "independent|mirrored")->capture_default_str();
  c->add_option("--csv", corr.csv, "CSV output path");
  c->add_option("--pgm", corr.pgm, "PGM heatmap output path");

  FuseArgs fuse;
  auto* f = app.add_subcommand("fuse", "fuse two feature files");
  f->add_option("--method", fuse.method, "concat|lp|wsum")->capture_default_str();
  f->add_option("--u", fuse.u)->required();
  f->add_option("--v", fuse.v)->required();
  f->add_option("--out", fuse.out)->required();
  f->add_option("--k", fuse.k, "common projection dim")->capture_default_str();
  f->add_option("--output-dim", fuse.output_dim)->capture_default_str();
  f->add_option("--seed", fuse.seed)->capture_default_str();
  f->add_option("--init", fuse.init, "independent|mirrored")->capture_default_str();
  f->add_option("--params", fuse.params, "load parameters from a params.json");
  f->add_option("--save-params", fuse.save_params, "write the parameters used");
  f->add_flag("--project-output", fuse.project_output, "apply the final output projection");

  TrainArgs train;
  ffuse_fusion_config_default(&train.fusion);
  ffuse_train_config_default(&train.train);
  auto* t = app.add_subcommand("train", "train fusion parameters on a stream pair");
  t->add_option("--u", train.u)->required();
  t->add_option("--v", train.v)->required();
  t->add_option("--target", train.target, "regression target for the task loss");
  t->add_option("--method", train.method, "lp|wsum")->capture_default_str();
  t->add_option("--preset", train.preset, "wsj|fsc lambda/epsilon preset")
      ->check(CLI::IsMember({"wsj", "fsc"}));
  t->add_option("--lambda", train.fusion.lambda)->capture_default_str();
  t->add_option("--epsilon", train.fusion.epsilon)->capture_default_str();
  t->add_option("--k", train.fusion.common_dim)->capture_default_str();
  t->add_option("--output-dim", train.fusion.output_dim)->capture_default_str();
  t->add_option("--steps", train.train.steps)->capture_default_str();
  t->add_option("--lr", train.train.learning_rate)->capture_default_str();
  t->add_option("--warmup", train.train.warmup_steps)->capture_default_str();
  t->add_option("--batch", train.train.batch_size)->capture_default_str();
  t->add_option("--seed", train.train.seed)->capture_default_str();
  t->add_option("--optimizer", train.optimizer, "adam|sgd")->capture_default_str();
  t->add_option("--init", train.init, "independent|mirrored")->capture_default_str();
  t->add_option("--task-weight", train.task_weight,
                "task loss weight (default 1 with --target, else 0)");
  t->add_flag("--audit", train.train.audit_first_step, "gradient-audit the first step");
  t->add_option("--report", train.report, "directory for manifest, report and exports");

  uint64_t grad_seed = 0;
  bool grad_verbose = false;
  auto* k = app.add_subcommand("check-grad", "finite-difference gradient audit");
  k->add_option("--seed", grad_seed)->capture_default_str();
  k->add_flag("-v,--verbose", grad_verbose, "print every check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*g) return RunGen(gen);
    if (*c) return RunCorr(corr);
    if (*f) return RunFuse(fuse);
    if (*t) {
      if (!train.preset.empty()) {
        // Explicit --lambda/--epsilon win over the preset.
        ffuse_fusion_config p = train.fusion;
        Check(ffuse_fusion_config_preset(train.preset.c_str(), &p));
        if (t->count("--lambda") == 0) train.fusion.lambda = p.lambda;
        if (t->count("--epsilon") == 0) train.fusion.epsilon = p.epsilon;
      }
      return RunTrain(train);
    }
    if (*k) return RunCheckGrad(grad_seed, grad_verbose);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
