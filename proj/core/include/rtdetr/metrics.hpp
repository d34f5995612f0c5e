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

#ifndef RTDETR_METRICS_HPP_
#define RTDETR_METRICS_HPP_

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rtdetr/model.hpp"

namespace rtdetr {

inline constexpr std::array<double, 10> kIouThresholds = {
    0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
inline constexpr std::size_t kRecallPoints = 101;

struct EvalSample {
  std::string image_id;
  std::vector<Detection> detections;
  std::vector<GroundTruth> ground_truths;
};

struct ClassAP {
  int class_id = 0;
  std::size_t num_gt = 0;
  std::array<double, kIouThresholds.size()> ap{};  // one per IoU threshold

  double ap50() const { return ap[0]; }
  double ap50_95() const;

  friend bool operator==(const ClassAP&, const ClassAP&) = default;
};

// Precision / Recall / mAP50 / mAP50-95, the four columns of a detection
// results table, plus per-class AP.
struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double map50 = 0.0;
  double map50_95 = 0.0;
  std::vector<ClassAP> per_class;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

struct EvalOptions {
  // Scalar precision/recall are reported at this confidence threshold when
  // set, otherwise at the threshold maximizing F1 at IoU 0.5.
  std::optional<double> fixed_threshold;
};

// Single-class TP/FP flags for detections already sorted by score. Each
// detection takes the highest-IoU unmatched ground truth with IoU >= thr
// (ties: lower index).
std::vector<bool> greedy_match(std::span<const BoxCS> dets, std::span<const BoxCS> gts,
                               double iou_thr);

// 101-point interpolated AP over recall levels {0, 0.01, ..., 1}.
double average_precision(const std::vector<bool>& flags, std::size_t num_gt);

// Detections are ordered internally by score (descending), then box
// coordinates, then image id, so input order never matters. Classes without
// ground truth do not enter the means but their detections still count as
// false positives for precision.
MetricsReport evaluate(std::span<const EvalSample> samples, const EvalOptions& options = {});

// Independent, unoptimized recomputation of evaluate(); at most 20
// detections per image.
MetricsReport brute_force_map(std::span<const EvalSample> samples,
                              const EvalOptions& options = {});

// Mean over all ground truths of max(0, h - 1), where h counts the
// same-class detections of its image with IoU >= iou_thr: how many extra
// boxes a suppression step would have had to remove. 0 without ground truths.
double duplicates_per_ground_truth(std::span<const EvalSample> samples, double iou_thr = 0.5);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(std::string_view text);

// Detections interchange: JSON Lines, one object per detection:
// {"image_id": str, "class_id": int, "score": real, "box_cs": [cx, cy, w, h]}
struct DetectionRecord {
  std::string image_id;
  Detection detection;
};

std::string detections_to_jsonl(std::span<const EvalSample> samples);
std::vector<DetectionRecord> detections_from_jsonl(std::string_view text);
void write_detections(const std::filesystem::path& path, std::span<const EvalSample> samples);
std::vector<DetectionRecord> read_detections(const std::filesystem::path& path);

}  // namespace rtdetr

#endif  // RTDETR_METRICS_HPP_
