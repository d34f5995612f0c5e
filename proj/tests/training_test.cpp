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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rtdetr/checkpoint.hpp"
#include "rtdetr/errors.hpp"
#include "rtdetr/training.hpp"

namespace rtdetr {
namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.image_size = 32;
  c.patch_sizes = {8, 16};
  c.d_model = 16;
  c.num_heads = 2;
  c.num_encoder_layers = 1;
  c.num_decoder_layers = 1;
  c.num_queries = 12;
  c.num_classes = 4;
  return c;
}

std::vector<AnnotatedImage> small_data(std::size_t n, std::size_t first = 0) {
  SceneSpec s;
  s.image_size = 32;
  s.count_min = 2;
  s.count_max = 5;
  return generate_dataset(s, n, first);
}

std::vector<NamedTensor> one_param(double value, double grad) {
  Tensor p = Tensor::vector({value});
  p.set_requires_grad(true);
  if (grad != 0.0) sum(scale(p, grad)).backward();
  return {{"p", p}};
}

TrainConfig sgd(double lr, double momentum) {
  TrainConfig c;
  c.optimizer = OptimizerKind::kSgd;
  c.learning_rate = lr;
  c.momentum = momentum;
  c.grad_clip_norm = 0.0;
  return c;
}

TEST(OptimizerStep, ZeroGradientLeavesParametersUnchanged) {
  for (OptimizerKind kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    auto params = one_param(1.25, 0.0);
    TrainConfig c = sgd(0.1, 0.0);
    c.optimizer = kind;
    OptimizerState st;
    optimizer_step(params, st, c);
    EXPECT_EQ(params[0].tensor.at(0), 1.25);
  }
}

TEST(OptimizerStep, SgdSubstitution) {
  auto params = one_param(1.0, 0.5);
  OptimizerState st;
  optimizer_step(params, st, sgd(0.1, 0.0));
  EXPECT_NEAR(params[0].tensor.at(0), 0.95, 1e-15);
}

TEST(OptimizerStep, SgdMomentumRecurrence) {
  auto params = one_param(0.0, 1.0);
  const TrainConfig c = sgd(0.01, 0.9);
  OptimizerState st;
  optimizer_step(params, st, c);
  EXPECT_DOUBLE_EQ(st.m[0][0], 1.0);
  optimizer_step(params, st, c);  // same gradient of 1 still accumulated
  EXPECT_DOUBLE_EQ(st.m[0][0], 1.9);
  EXPECT_NEAR(params[0].tensor.at(0), -0.01 * 2.9, 1e-15);
}

TEST(OptimizerStep, AdamFirstStepMovesByLearningRate) {
  auto params = one_param(0.0, 3.0);
  TrainConfig c;
  c.learning_rate = 0.01;
  c.grad_clip_norm = 0.0;
  OptimizerState st;
  optimizer_step(params, st, c);
  // Bias-corrected m/sqrt(v) = g/|g| on the first step.
  EXPECT_NEAR(params[0].tensor.at(0), -0.01, 1e-9);
}

TEST(OptimizerStep, ShapeMismatchIsContractError) {
  auto params = one_param(1.0, 1.0);
  OptimizerState st;
  optimizer_step(params, st, sgd(0.1, 0.9));
  Tensor bigger = Tensor::vector({1, 2});
  std::vector<NamedTensor> other{{"p", bigger}};
  EXPECT_THROW(optimizer_step(other, st, sgd(0.1, 0.9)), ContractError);
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  Tensor a = Tensor::vector({1, 1});
  a.set_requires_grad(true);
  std::vector<NamedTensor> params{{"a", a}};
  sum(mul(a, Tensor::vector({3, 4}))).backward();  // grad (3, 4), norm 5
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-15);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(optimizer_from_string("sgd"), OptimizerKind::kSgd);
  EXPECT_THROW(optimizer_from_string("rmsprop"), ConfigError);
}

TEST(TrainEpoch, DeterministicBitForBit) {
  const auto data = small_data(3);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 2;
  auto run = [&] {
    DetectionModel m(small_model(), 4);
    auto recs = train(m, data, c);
    return std::make_pair(recs, encode_checkpoint(m));
  };
  const auto [r1, ck1] = run();
  const auto [r2, ck2] = run();
  ASSERT_EQ(r1.size(), 2u);
  for (std::size_t i = 0; i < r1.size(); ++i) {
    EXPECT_EQ(r1[i].epoch, i + 1);
    EXPECT_EQ(r1[i].loss, r2[i].loss);
  }
  EXPECT_EQ(ck1, ck2);
}

TEST(TrainEpoch, EmptyDatasetIsInputError) {
  DetectionModel m(small_model(), 1);
  OptimizerState st;
  EXPECT_THROW(train_epoch(m, {}, TrainConfig{}, st, 1), InputError);
}

TEST(LrSweep, RowsInInputOrderAndConsistent) {
  const auto train_set = small_data(2);
  const auto eval_set = small_data(1, 2);
  TrainConfig base;
  base.epochs = 2;
  const double lrs[] = {0.025, 0.03, 0.005, 0.02, 0.01};
  const SweepReport r = lr_sweep(lrs, base, small_model(), train_set, eval_set);
  ASSERT_EQ(r.rows.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(r.rows[i].learning_rate, lrs[i]);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_LE(r.rows[i].report.map50_95, r.rows[r.best_index].report.map50_95);
  }
  const std::string csv = sweep_to_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "lr,precision,recall,map50,map50_95,best");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '*'), 1);

  // A single-lr sweep equals a standalone train + evaluate.
  const double one[] = {0.005};
  const SweepReport single = lr_sweep(one, base, small_model(), train_set, eval_set);
  TrainConfig c = base;
  c.learning_rate = 0.005;
  DetectionModel m(small_model(), base.seed);
  train(m, train_set, c);
  EXPECT_EQ(single.rows.at(0).report, evaluate_model(m, eval_set));
  EXPECT_EQ(single.rows.at(0).report, r.rows[2].report);

  const double dup[] = {0.01, 0.01};
  const SweepReport d = lr_sweep(dup, base, small_model(), train_set, eval_set);
  EXPECT_EQ(d.rows[0].report, d.rows[1].report);
  EXPECT_EQ(d.best_index, 0u);

  EXPECT_THROW(lr_sweep({}, base, small_model(), train_set, eval_set), InputError);
}

TEST(LossCurve, CsvContract) {
  std::vector<EpochRecord> recs;
  for (std::size_t e = 1; e <= 3; ++e) {
    recs.push_back({e, {1.0 / static_cast<double>(e), 0.123456789, 0.5, 2.0 / 3.0}, 0.1});
  }
  const auto path = std::filesystem::temp_directory_path() / "rtdetr_loss_curve.csv";
  emit_loss_curve(recs, path);
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "epoch,total,cls,l1,giou");
  std::size_t prev = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::stringstream ss(lines[i]);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    ASSERT_EQ(v.size(), 5u);
    const auto epoch = static_cast<std::size_t>(v[0]);
    EXPECT_GT(epoch, prev);
    prev = epoch;
    const auto& r = recs[i - 1].loss;
    EXPECT_NEAR(v[1], r.total, 1e-6);
    EXPECT_NEAR(v[2], r.cls, 1e-6);
    EXPECT_NEAR(v[3], r.l1, 1e-6);
    EXPECT_NEAR(v[4], r.giou, 1e-6);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(emit_loss_curve(recs, "/nonexistent/dir/curve.csv"), IoError);
  EXPECT_THROW(emit_loss_curve({}, path), InputError);
}

}  // namespace
}  // namespace rtdetr
