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

#ifndef RTDETR_TRAINING_HPP_
#define RTDETR_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rtdetr/losses.hpp"
#include "rtdetr/matching.hpp"
#include "rtdetr/metrics.hpp"
#include "rtdetr/model.hpp"
#include "rtdetr/synth.hpp"

namespace rtdetr {

enum class OptimizerKind { kSgd, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);  // "sgd" | "adam"

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 1;
  double learning_rate = 0.01;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double momentum = 0.9;  // SGD
  double beta1 = 0.9;     // Adam
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip; <= 0 disables.
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 7;
  LossWeights loss;
  MatchWeights match;

  void validate() const;
};

// Per-parameter moment buffers, created lazily on the first step.
struct OptimizerState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Scales every gradient in place so the global L2 norm is at most
// max_norm. Returns the norm before clipping.
double clip_grad_norm(std::span<NamedTensor> params, double max_norm);

// One update from the accumulated gradients (missing gradients count as
// zero), clipping first when configured.
//   SGD:  v <- mu v + g;  p <- p - lr v
//   Adam: bias-corrected first/second moments.
// Throws ContractError if the state was built for different shapes.
void optimizer_step(std::span<NamedTensor> params, OptimizerState& state,
                    const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossValues loss;        // dataset means
  double seconds = 0.0;
};

// Forward, match, and loss for one image; the breakdown's graph is live.
LossBreakdown image_loss(const DetectionModel& model, const AnnotatedImage& scene,
                         const TrainConfig& config);

// One pass over the data in a seeded, epoch-dependent shuffled order. Each
// batch accumulates gradients of its mean loss before a single step.
EpochRecord train_epoch(DetectionModel& model, std::span<const AnnotatedImage> data,
                        const TrainConfig& config, OptimizerState& state, std::size_t epoch);

using EpochCallback = std::function<void(const EpochRecord&)>;

std::vector<EpochRecord> train(DetectionModel& model, std::span<const AnnotatedImage> data,
                               const TrainConfig& config, const EpochCallback& on_epoch = {});

// Decodes every query (threshold 0, no truncation) and scores the result.
std::vector<EvalSample> predict_samples(const DetectionModel& model,
                                        std::span<const AnnotatedImage> data,
                                        double conf_threshold = 0.0);
MetricsReport evaluate_model(const DetectionModel& model, std::span<const AnnotatedImage> data,
                             const EvalOptions& options = {});

struct SweepRow {
  double learning_rate = 0.0;
  MetricsReport report;
};

struct SweepReport {
  std::vector<SweepRow> rows;  // input order
  std::size_t best_index = 0;  // argmax map50_95, first on ties
};

// Trains a fresh model (seeded by base.seed) per learning rate and
// evaluates it on eval_set.
SweepReport lr_sweep(std::span<const double> lrs, const TrainConfig& base,
                     const ModelConfig& model_config, std::span<const AnnotatedImage> train_set,
                     std::span<const AnnotatedImage> eval_set);

// CSV: lr,precision,recall,map50,map50_95,best
std::string sweep_to_csv(const SweepReport& report);
std::string sweep_to_json(const SweepReport& report);

// CSV: epoch,total,cls,l1,giou with 6-decimal fixed values.
std::string loss_curve_csv(std::span<const EpochRecord> records);
void emit_loss_curve(std::span<const EpochRecord> records, const std::filesystem::path& path);

}  // namespace rtdetr

#endif  // RTDETR_TRAINING_HPP_
