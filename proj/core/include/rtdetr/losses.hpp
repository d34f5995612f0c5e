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

#ifndef RTDETR_LOSSES_HPP_
#define RTDETR_LOSSES_HPP_

#include <cstddef>
#include <span>

#include "rtdetr/matching.hpp"
#include "rtdetr/model.hpp"

namespace rtdetr {

struct LossWeights {
  double lambda_cls = 1.0;
  double lambda_l1 = 5.0;
  double lambda_giou = 2.0;
  // Scale on the cross-entropy of unmatched queries towards "no object".
  double noobj_weight = 0.1;

  void validate() const;
};

// Component values; total = lambda_cls*cls + lambda_l1*l1 + lambda_giou*giou.
struct LossValues {
  double total = 0.0;
  double cls = 0.0;
  double l1 = 0.0;
  double giou = 0.0;

  friend bool operator==(const LossValues&, const LossValues&) = default;
};

struct LossBreakdown {
  Tensor graph;  // scalar total, differentiable
  LossValues values;
};

double weighted_total(const LossWeights& w, double cls, double l1, double giou);

// -log softmax(logits)[target] for a length-(K+1) logit vector.
Tensor cross_entropy(const Tensor& logits, std::size_t target);

// 1 - GIoU between a predicted center/size box (4 values) and a fixed box.
Tensor giou_loss(const Tensor& pred_cs, const BoxCS& gt);

// cls: mean over all queries of the cross-entropy, matched queries towards
// their ground-truth class, unmatched ones towards class K scaled by
// noobj_weight. l1 / giou: means over matched pairs (0 without ground
// truths). The assignment is a constant; gradients flow only through the
// predictions.
LossBreakdown composite_loss(const Predictions& p, std::span<const GroundTruth> gts,
                             const Assignment& a, const LossWeights& w);

}  // namespace rtdetr

#endif  // RTDETR_LOSSES_HPP_
