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

#include "rtdetr/training.hpp"

namespace rtdetr {
namespace {

// Convergence smoke check: 8 scenes, default model and training settings,
// 200 epochs; the final mean loss must drop below 10% of the first epoch's.
TEST(Overfit, DefaultsReduceLossTenfoldIn200Epochs) {
  const auto data = generate_dataset(SceneSpec{}, 8);
  TrainConfig c;
  c.epochs = 200;
  DetectionModel m(ModelConfig{}, c.seed);
  const auto recs = train(m, data, c);
  const double first = recs.front().loss.total, last = recs.back().loss.total;
  std::printf("epoch 1 loss %.6f, epoch %zu loss %.6f, ratio %.4f\n", first, recs.size(), last,
              last / first);
  EXPECT_LT(last, 0.1 * first);
}

}  // namespace
}  // namespace rtdetr
