/* Copyright 2026 The rtdetr-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef RTDETR_CLI_HPP_
#define RTDETR_CLI_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "rtdetr/metrics.hpp"
#include "rtdetr/model.hpp"
#include "rtdetr/synth.hpp"
#include "rtdetr/training.hpp"

namespace rtdetr::cli {

struct Paths {
  std::string data_dir = "data";
  std::string out_dir = "runs";
  // Empty means <out_dir>/model.rtdk.
  std::string checkpoint;

  std::filesystem::path checkpoint_path() const;
};

// Everything a run needs. The model's image_size and num_classes must agree
// with the scene's.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SceneSpec scene;
  Paths paths;

  void validate() const;
};

// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<double> learning_rate;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::uint64_t> scene_seed;
  std::optional<std::string> data_dir;
  std::optional<std::string> out_dir;
  std::optional<std::string> checkpoint;
};

// defaults <- file <- overrides, then full validation. The file is a JSON
// object with optional sections "model", "train", "scene" and "paths";
// unknown keys raise ConfigError naming the dotted key. A missing file is an
// IoError.
RunConfig parse_config(const std::optional<std::filesystem::path>& file,
                       const Overrides& overrides = {});
RunConfig config_from_json(std::string_view text);
std::string config_to_json(const RunConfig& config);

TrainConfig train_config_from_json(std::string_view text);
std::string train_config_to_json(const TrainConfig& config);

enum class ReportStyle { kTable, kJson };

ReportStyle style_from_string(const std::string& name);  // "table" | "json"

// Table: a "Precision Recall mAP50 mAP50-95" header and one row of
// two-decimal values aligned under it. Json: report_to_json.
std::string format_report(const MetricsReport& report, ReportStyle style);

// Exit codes: 0 success, 1 usage error, 2 runtime error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rtdetr::cli

#endif  // RTDETR_CLI_HPP_
