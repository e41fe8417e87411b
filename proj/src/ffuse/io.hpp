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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ffuse/feature.hpp"
#include "ffuse/fusion.hpp"
#include "ffuse/refine_loss.hpp"
#include "ffuse/trainer.hpp"

namespace ffuse {

// Feature file layout, all little-endian:
//   bytes 0-7   magic "FFUSE\0v1"
//   bytes 8-11  T (uint32)
//   bytes 12-15 K (uint32)
//   bytes 16-19 stride_ms (float32)
//   then T*K float32 values, row-major.
inline constexpr std::array<char, 8> kFeatureMagic = {'F', 'F', 'U', 'S', 'E', '\0', 'v', '1'};
inline constexpr std::size_t kFeatureHeaderBytes = 20;

/// Values are stored as float32; doubles that are not exactly
/// representable are rounded.
void WriteFeatureFile(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix ReadFeatureFile(const std::filesystem::path& path);

std::vector<std::uint8_t> EncodeFeatures(const FeatureMatrix& m);
FeatureMatrix DecodeFeatures(std::string_view bytes);

/// Shortest decimal form that parses back to the same double.
std::string FormatDouble(double v);
double ParseDouble(std::string_view s);

/// Comma-separated rows, '\n' line endings, shortest round-trip floats.
std::string CorrelationCsv(const Matrix& c);
void WriteCorrelationCsv(const std::filesystem::path& path, const Matrix& c);
Matrix ReadMatrixCsv(const std::filesystem::path& path);

/// Heatmap pixel for a correlation value: (c + 1) * 127.5, rounded half
/// down and clamped to [0, 255], so -1 -> 0, 0 -> 127, +1 -> 255.
std::uint8_t CorrelationPixel(double c);
/// Binary P5 PGM, one pixel per matrix entry, row 0 at the top.
std::string CorrelationPgm(const Matrix& c);
void WriteCorrelationPgm(const std::filesystem::path& path, const Matrix& c);

/// Writes whichever of the two outputs has a non-empty path.
void ExportCorrelation(const CorrelationMatrix& c, const std::filesystem::path& csv_path,
                       const std::filesystem::path& pgm_path);

/// Ordered key=value document. Keys are non-empty and contain neither '='
/// nor newlines; values contain no newlines.
class RunManifest {
 public:
  void Set(std::string key, std::string value);
  std::optional<std::string> Get(std::string_view key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

  std::string Serialize() const;
  /// Blank lines and lines starting with '#' are ignored.
  static RunManifest Parse(std::string_view text);

  bool operator==(const RunManifest&) const = default;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

RunManifest MakeRunManifest(const FusionConfig& fusion, const TrainConfig& train);

/// Key=value summary of a finished run (final losses, correlations, gate,
/// timing).
RunManifest SummarizeReport(const TrainReport& report);

/// step,task_loss,refine_loss,total,lr,max_abs_corr
std::string StepHistoryCsv(const std::vector<StepRecord>& history);

void WriteTextFile(const std::filesystem::path& path, std::string_view text);
std::string ReadTextFile(const std::filesystem::path& path);

/// JSON parameter bundle for a FusionModel.
std::string SerializeModel(const FusionModel& model);
FusionModel DeserializeModel(std::string_view json);

}  // namespace ffuse
