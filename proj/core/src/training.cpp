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

#include "rtdetr/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "rtdetr/errors.hpp"
#include "rtdetr/rng.hpp"

namespace rtdetr {

using json = nlohmann::json;

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train: " + msg); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail("adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) fail("epsilon must be > 0");
  loss.validate();
  match.validate();
}

// ---------------------------------------------------------------------------
// Optimizer

double clip_grad_norm(std::span<NamedTensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params) {
      for (double& g : p.tensor.impl()->grad) g *= f;
    }
  }
  return norm;
}

void optimizer_step(std::span<NamedTensor> params, OptimizerState& state,
                    const TrainConfig& config) {
  if (state.m.empty() && state.step == 0) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].tensor.size(), 0.0);
      if (config.optimizer == OptimizerKind::kAdam) state.v[i].assign(params[i].tensor.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("optimizer state holds " + std::to_string(state.m.size()) +
                        " buffers for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i].tensor.size();
    const bool v_ok = config.optimizer != OptimizerKind::kAdam || state.v[i].size() == n;
    if (state.m[i].size() != n || !v_ok) {
      throw ContractError("optimizer state shape mismatch for '" + params[i].name + "'");
    }
    const auto g = params[i].tensor.grad();
    if (!g.empty() && g.size() != n) {
      throw ContractError("gradient shape mismatch for '" + params[i].name + "'");
    }
  }
  if (config.grad_clip_norm > 0.0) clip_grad_norm(params, config.grad_clip_norm);

  ++state.step;
  const double lr = config.learning_rate;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].tensor.mutable_data();
    const auto g = params[i].tensor.grad();
    auto& m = state.m[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      if (config.optimizer == OptimizerKind::kSgd) {
        m[k] = config.momentum * m[k] + gk;
        p[k] -= lr * m[k];
      } else {
        auto& v = state.v[i];
        m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
        v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
        p[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + config.epsilon);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Loop

LossBreakdown image_loss(const DetectionModel& model, const AnnotatedImage& scene,
                         const TrainConfig& config) {
  const Predictions p = model.forward(scene.image);
  const std::vector<GroundTruth> gts = scene.ground_truths();
  const Assignment a = hungarian(build_cost_matrix(p, gts, config.match));
  return composite_loss(p, gts, a, config.loss);
}

namespace {

constexpr std::uint64_t kShuffleStream = 0x5A0FF1E000000000ULL;

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, kShuffleStream + epoch);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

EpochRecord train_epoch(DetectionModel& model, std::span<const AnnotatedImage> data,
                        const TrainConfig& config, OptimizerState& state, std::size_t epoch) {
  if (data.empty()) throw InputError("train_epoch: empty dataset");
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::vector<std::size_t> order = epoch_order(data.size(), config.seed, epoch);

  LossValues sum;
  auto& params = model.params();
  params.zero_grad();
  for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
    const std::size_t end = std::min(order.size(), b + config.batch_size);
    const double inv = 1.0 / static_cast<double>(end - b);
    for (std::size_t k = b; k < end; ++k) {
      LossBreakdown lb = image_loss(model, data[order[k]], config);
      scale(lb.graph, inv).backward();
      sum.total += lb.values.total;
      sum.cls += lb.values.cls;
      sum.l1 += lb.values.l1;
      sum.giou += lb.values.giou;
    }
    optimizer_step(params.entries(), state, config);
    params.zero_grad();
  }
  const double n = static_cast<double>(data.size());
  EpochRecord rec;
  rec.epoch = epoch;
  rec.loss = {sum.total / n, sum.cls / n, sum.l1 / n, sum.giou / n};
  rec.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<EpochRecord> train(DetectionModel& model, std::span<const AnnotatedImage> data,
                               const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (data.empty()) throw InputError("train: empty dataset");
  OptimizerState state;
  std::vector<EpochRecord> out;
  out.reserve(config.epochs);
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    out.push_back(train_epoch(model, data, config, state, e));
    if (on_epoch) on_epoch(out.back());
  }
  return out;
}

std::vector<EvalSample> predict_samples(const DetectionModel& model,
                                        std::span<const AnnotatedImage> data,
                                        double conf_threshold) {
  std::vector<EvalSample> out;
  out.reserve(data.size());
  for (const AnnotatedImage& s : data) {
    const Predictions p = model.forward(s.image);
    out.push_back({s.id(), decode(p, conf_threshold, p.num_queries()), s.ground_truths()});
  }
  return out;
}

MetricsReport evaluate_model(const DetectionModel& model, std::span<const AnnotatedImage> data,
                             const EvalOptions& options) {
  if (data.empty()) throw InputError("evaluate_model: empty dataset");
  const auto samples = predict_samples(model, data);
  return evaluate(samples, options);
}

// ---------------------------------------------------------------------------
// Sweep

SweepReport lr_sweep(std::span<const double> lrs, const TrainConfig& base,
                     const ModelConfig& model_config, std::span<const AnnotatedImage> train_set,
                     std::span<const AnnotatedImage> eval_set) {
  if (lrs.empty()) throw InputError("lr_sweep: empty learning-rate list");
  SweepReport out;
  for (double lr : lrs) {
    TrainConfig cfg = base;
    cfg.learning_rate = lr;
    DetectionModel model(model_config, base.seed);
    train(model, train_set, cfg);
    out.rows.push_back({lr, evaluate_model(model, eval_set)});
  }
  for (std::size_t i = 1; i < out.rows.size(); ++i) {
    if (out.rows[i].report.map50_95 > out.rows[out.best_index].report.map50_95) out.best_index = i;
  }
  return out;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string lr_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string sweep_to_csv(const SweepReport& r) {
  std::string out = "lr,precision,recall,map50,map50_95,best\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    out += lr_text(row.learning_rate) + "," + fixed6(row.report.precision) + "," +
           fixed6(row.report.recall) + "," + fixed6(row.report.map50) + "," +
           fixed6(row.report.map50_95) + "," + (i == r.best_index ? "*" : "") + "\n";
  }
  return out;
}

std::string sweep_to_json(const SweepReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"lr", row.learning_rate},
                    {"precision", row.report.precision},
                    {"recall", row.report.recall},
                    {"map50", row.report.map50},
                    {"map50_95", row.report.map50_95}});
  }
  const json j = {{"rows", rows},
                  {"best_index", r.best_index},
                  {"best_lr", r.rows.empty() ? 0.0 : r.rows[r.best_index].learning_rate}};
  return j.dump(2) + "\n";
}

std::string loss_curve_csv(std::span<const EpochRecord> records) {
  std::string out = "epoch,total,cls,l1,giou\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch) + "," + fixed6(r.loss.total) + "," + fixed6(r.loss.cls) + "," +
           fixed6(r.loss.l1) + "," + fixed6(r.loss.giou) + "\n";
  }
  return out;
}

void emit_loss_curve(std::span<const EpochRecord> records, const std::filesystem::path& path) {
  if (records.empty()) throw InputError("emit_loss_curve: no records");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << loss_curve_csv(records);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace rtdetr
