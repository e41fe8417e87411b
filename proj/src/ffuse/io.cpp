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

#include "ffuse/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "ffuse/error.hpp"

namespace ffuse {

namespace {

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t GetU32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

void PutF32(std::vector<std::uint8_t>& out, float f) { PutU32(out, std::bit_cast<std::uint32_t>(f)); }

float GetF32(std::string_view bytes, std::size_t offset) {
  return std::bit_cast<float>(GetU32(bytes, offset));
}

float ToFloat(double v, std::size_t index) {
  const auto f = static_cast<float>(v);
  if (!std::isfinite(f)) {
    std::ostringstream os;
    os << "value at flat index " << index << " (" << v << ") does not fit in float32";
    Fail(ErrorKind::kNonFinite, os.str());
  }
  return f;
}

std::ofstream OpenForWrite(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  return out;
}

void WriteBytes(const std::filesystem::path& path, const char* data, std::size_t n) {
  std::ofstream out = OpenForWrite(path);
  out.write(data, static_cast<std::streamsize>(n));
  out.close();
  if (!out) Fail(ErrorKind::kIo, "failed writing '" + path.string() + "'");
}

Matrix JsonToMatrix(const nlohmann::json& j) {
  const auto rows = j.size();
  if (rows == 0) Fail(ErrorKind::kFormat, "empty matrix in parameter file");
  const auto cols = j.at(0).size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (j.at(r).size() != cols) Fail(ErrorKind::kFormat, "ragged matrix in parameter file");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j.at(r).at(c).get<double>();
    }
  }
  return m;
}

nlohmann::json MatrixToJson(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json AffineToJson(const AffineProjection& p) {
  return {{"weight", MatrixToJson(p.weight)}, {"bias", MatrixToJson(p.bias)}};
}

AffineProjection AffineFromJson(const nlohmann::json& j) {
  const Matrix bias = JsonToMatrix(j.at("bias"));
  if (bias.rows() != 1) Fail(ErrorKind::kFormat, "bias must be a single row");
  return AffineProjection(JsonToMatrix(j.at("weight")), bias.row(0));
}

}  // namespace

std::vector<std::uint8_t> EncodeFeatures(const FeatureMatrix& m) {
  std::vector<std::uint8_t> out(kFeatureMagic.begin(), kFeatureMagic.end());
  out.reserve(kFeatureHeaderBytes + static_cast<std::size_t>(m.data().size()) * 4);
  PutU32(out, static_cast<std::uint32_t>(m.frames()));
  PutU32(out, static_cast<std::uint32_t>(m.dims()));
  PutF32(out, ToFloat(m.stride_ms(), 0));
  const Matrix& d = m.data();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    PutF32(out, ToFloat(d.data()[i], static_cast<std::size_t>(i)));
  }
  return out;
}

FeatureMatrix DecodeFeatures(std::string_view bytes) {
  if (bytes.size() < kFeatureMagic.size() ||
      std::memcmp(bytes.data(), kFeatureMagic.data(), kFeatureMagic.size()) != 0) {
    Fail(ErrorKind::kFormat, "unrecognized format: bad magic");
  }
  if (bytes.size() < kFeatureHeaderBytes) {
    std::ostringstream os;
    os << "corrupt file: header needs " << kFeatureHeaderBytes << " bytes, found "
       << bytes.size();
    Fail(ErrorKind::kFormat, os.str());
  }
  const std::uint32_t t = GetU32(bytes, 8);
  const std::uint32_t k = GetU32(bytes, 12);
  const float stride = GetF32(bytes, 16);
  const std::uint64_t expected = std::uint64_t{t} * k * 4;
  const std::uint64_t actual = bytes.size() - kFeatureHeaderBytes;
  if (expected != actual) {
    std::ostringstream os;
    os << "corrupt file: expected " << expected << " payload bytes, found " << actual;
    Fail(ErrorKind::kFormat, os.str());
  }
  Matrix data(t, k);
  for (std::uint64_t i = 0; i < std::uint64_t{t} * k; ++i) {
    const float f = GetF32(bytes, kFeatureHeaderBytes + 4 * i);
    if (!std::isfinite(f)) {
      std::ostringstream os;
      os << "non-finite value at row " << i / k << ", column " << i % k;
      Fail(ErrorKind::kNonFinite, os.str());
    }
    data.data()[i] = f;
  }
  return FeatureMatrix(std::move(data), stride);
}

void WriteFeatureFile(const std::filesystem::path& path, const FeatureMatrix& m) {
  const std::vector<std::uint8_t> bytes = EncodeFeatures(m);
  WriteBytes(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

FeatureMatrix ReadFeatureFile(const std::filesystem::path& path) {
  try {
    return DecodeFeatures(ReadTextFile(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string FormatDouble(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double ParseDouble(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    Fail(ErrorKind::kFormat, "not a number: '" + std::string(s) + "'");
  }
  return v;
}

std::string CorrelationCsv(const Matrix& c) {
  std::string out;
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    for (Eigen::Index col = 0; col < c.cols(); ++col) {
      if (col > 0) out += ',';
      out += FormatDouble(c(r, col));
    }
    out += '\n';
  }
  return out;
}

void WriteCorrelationCsv(const std::filesystem::path& path, const Matrix& c) {
  WriteTextFile(path, CorrelationCsv(c));
}

Matrix ReadMatrixCsv(const std::filesystem::path& path) {
  const std::string text = ReadTextFile(path);
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      row.push_back(ParseDouble(std::string_view(line).substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      Fail(ErrorKind::kFormat, path.string() + ": ragged CSV");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) Fail(ErrorKind::kFormat, path.string() + ": empty CSV");
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

std::uint8_t CorrelationPixel(double c) {
  const double scaled = (c + 1.0) * 127.5;
  const double rounded = std::ceil(scaled - 0.5);
  return static_cast<std::uint8_t>(std::clamp(rounded, 0.0, 255.0));
}

std::string CorrelationPgm(const Matrix& c) {
  std::ostringstream os;
  os << "P5\n" << c.cols() << ' ' << c.rows() << "\n255\n";
  std::string out = os.str();
  out.reserve(out.size() + static_cast<std::size_t>(c.size()));
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    for (Eigen::Index col = 0; col < c.cols(); ++col) {
      out.push_back(static_cast<char>(CorrelationPixel(c(r, col))));
    }
  }
  return out;
}

void WriteCorrelationPgm(const std::filesystem::path& path, const Matrix& c) {
  WriteTextFile(path, CorrelationPgm(c));
}

void ExportCorrelation(const CorrelationMatrix& c, const std::filesystem::path& csv_path,
                       const std::filesystem::path& pgm_path) {
  if (!csv_path.empty()) WriteCorrelationCsv(csv_path, c.data());
  if (!pgm_path.empty()) WriteCorrelationPgm(pgm_path, c.data());
}

void RunManifest::Set(std::string key, std::string value) {
  if (key.empty() || key.find_first_of("=\n\r") != std::string::npos ||
      key.front() == '#') {
    Fail(ErrorKind::kInvalidArgument, "invalid manifest key '" + key + "'");
  }
  if (value.find_first_of("\n\r") != std::string::npos) {
    Fail(ErrorKind::kInvalidArgument, "manifest value for '" + key + "' contains a newline");
  }
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

std::optional<std::string> RunManifest::Get(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string RunManifest::Serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

RunManifest RunManifest::Parse(std::string_view text) {
  RunManifest m;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      std::ostringstream os;
      os << "manifest line " << line_no << ": expected key=value";
      Fail(ErrorKind::kFormat, os.str());
    }
    m.Set(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }
  return m;
}

RunManifest MakeRunManifest(const FusionConfig& fusion, const TrainConfig& train) {
  RunManifest m;
  m.Set("method", std::string(ToString(fusion.method)));
  m.Set("common_dim", std::to_string(fusion.common_dim));
  m.Set("output_dim", std::to_string(fusion.output_dim));
  m.Set("epsilon", FormatDouble(fusion.epsilon));
  m.Set("lambda", FormatDouble(fusion.lambda));
  m.Set("optimizer", std::string(ToString(train.optimizer)));
  m.Set("lr", FormatDouble(train.learning_rate));
  m.Set("warmup", std::to_string(train.warmup_steps));
  m.Set("steps", std::to_string(train.steps));
  m.Set("batch_size", std::to_string(train.batch_size));
  m.Set("seed", std::to_string(train.seed));
  m.Set("init", std::string(ToString(train.init)));
  m.Set("task_weight", FormatDouble(train.task_weight));
  m.Set("shuffle", train.shuffle ? "true" : "false");
  return m;
}

RunManifest SummarizeReport(const TrainReport& report) {
  RunManifest m;
  const LossBreakdown& last = report.history.back().loss;
  m.Set("steps_run", std::to_string(report.history.size()));
  m.Set("final_task_loss", FormatDouble(last.task_loss));
  m.Set("final_refine_loss", FormatDouble(last.refine_loss));
  m.Set("final_total_loss", FormatDouble(last.total));
  m.Set("final_masked_fraction", FormatDouble(last.masked_fraction));
  m.Set("max_abs_corr_initial", FormatDouble(report.max_abs_corr_initial));
  m.Set("max_abs_corr_final", FormatDouble(report.max_abs_corr_final));
  m.Set("mean_abs_corr_initial", FormatDouble(report.initial_corr.MeanAbs()));
  m.Set("mean_abs_corr_final", FormatDouble(report.final_corr.MeanAbs()));
  if (report.model.config.method == FusionMethod::kWeightedSum) {
    m.Set("alpha", FormatDouble(report.model.gate.alpha));
    m.Set("beta", FormatDouble(report.model.gate.beta));
  }
  if (report.audit_max_rel_error) {
    m.Set("audit_max_rel_error", FormatDouble(*report.audit_max_rel_error));
  }
  m.Set("wall_time_ms", FormatDouble(report.wall_time_ms));
  return m;
}

std::string StepHistoryCsv(const std::vector<StepRecord>& history) {
  std::string out = "step,task_loss,refine_loss,total,lr,max_abs_corr\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const StepRecord& s = history[i];
    out += std::to_string(i);
    for (double v : {s.loss.task_loss, s.loss.refine_loss, s.loss.total, s.lr, s.max_abs_corr}) {
      out += ',';
      out += FormatDouble(v);
    }
    out += '\n';
  }
  return out;
}

void WriteTextFile(const std::filesystem::path& path, std::string_view text) {
  WriteBytes(path, text.data(), text.size());
}

std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string SerializeModel(const FusionModel& model) {
  nlohmann::json j;
  j["method"] = std::string(ToString(model.config.method));
  j["common_dim"] = model.config.common_dim;
  j["output_dim"] = model.config.output_dim;
  j["epsilon"] = model.config.epsilon;
  j["lambda"] = model.config.lambda;
  j["k1"] = model.k1;
  j["k2"] = model.k2;
  if (model.proj_u) j["proj_u"] = AffineToJson(*model.proj_u);
  if (model.proj_v) j["proj_v"] = AffineToJson(*model.proj_v);
  j["alpha"] = model.gate.alpha;
  j["beta"] = model.gate.beta;
  j["output"] = AffineToJson(model.output);
  return j.dump(1);
}

FusionModel DeserializeModel(std::string_view text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    FusionConfig cfg;
    cfg.method = ParseFusionMethod(j.at("method").get<std::string>());
    cfg.common_dim = j.at("common_dim").get<std::ptrdiff_t>();
    cfg.output_dim = j.at("output_dim").get<std::ptrdiff_t>();
    cfg.epsilon = j.at("epsilon").get<double>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.Validate();
    const auto k1 = j.at("k1").get<std::ptrdiff_t>();
    const auto k2 = j.at("k2").get<std::ptrdiff_t>();
    FusionModel model = MakeFusionModel(cfg, k1, k2, 0);
    if (cfg.method != FusionMethod::kConcat) {
      model.proj_u = AffineFromJson(j.at("proj_u"));
      model.proj_v = AffineFromJson(j.at("proj_v"));
      if (model.proj_u->in_dim() != k1 || model.proj_v->in_dim() != k2 ||
          model.proj_u->out_dim() != cfg.common_dim ||
          model.proj_v->out_dim() != cfg.common_dim) {
        Fail(ErrorKind::kFormat, "stream projection shapes disagree with the config");
      }
    }
    model.gate.alpha = j.at("alpha").get<double>();
    model.gate.beta = j.at("beta").get<double>();
    model.output = AffineFromJson(j.at("output"));
    if (model.output.in_dim() != model.fused_dim() ||
        model.output.out_dim() != cfg.output_dim) {
      Fail(ErrorKind::kFormat, "output projection shape disagrees with the config");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, std::string("malformed parameter file: ") + e.what());
  }
}

}  // namespace ffuse
