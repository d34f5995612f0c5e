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

#include "rtdetr/losses.hpp"

#include <vector>

#include "rtdetr/errors.hpp"

namespace rtdetr {

void LossWeights::validate() const {
  if (!(lambda_cls >= 0.0) || !(lambda_l1 >= 0.0) || !(lambda_giou >= 0.0) ||
      !(noobj_weight >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (lambda_cls == 0.0 && lambda_l1 == 0.0 && lambda_giou == 0.0) {
    throw ConfigError("at least one of lambda_cls, lambda_l1, lambda_giou must be positive");
  }
}

double weighted_total(const LossWeights& w, double cls, double l1, double giou) {
  return w.lambda_cls * cls + w.lambda_l1 * l1 + w.lambda_giou * giou;
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  if (logits.rank() != 1) {
    throw DimensionError("cross_entropy expects a logit vector, got " +
                         shape_to_string(logits.dims()));
  }
  if (target >= logits.size()) {
    throw IndexError("cross_entropy: target " + std::to_string(target) +
                     " out of range for " + std::to_string(logits.size()) + " classes");
  }
  const Tensor row = log_softmax(reshape(logits, {1, logits.size()}), 1);
  const std::size_t idx[] = {target};
  return neg(pick(row, idx));
}

Tensor giou_loss(const Tensor& pred_cs, const BoxCS& gt) {
  if (pred_cs.size() != 4) {
    throw DimensionError("giou_loss expects 4 box values, got " +
                         shape_to_string(pred_cs.dims()));
  }
  const Tensor g = giou_tensor(reshape(pred_cs, {1, 4}),
                               Tensor::matrix(1, 4, {gt.cx, gt.cy, gt.w, gt.h}));
  return add_scalar(neg(g), 1.0);
}

namespace {

void check_assignment(const Assignment& a, std::size_t num_gt, std::size_t nq) {
  if (a.pairs.size() != num_gt) {
    throw ContractError("assignment has " + std::to_string(a.pairs.size()) +
                        " pairs for " + std::to_string(num_gt) + " ground truths");
  }
  std::vector<char> gt_seen(num_gt, 0), q_seen(nq, 0);
  for (const auto& [g, q] : a.pairs) {
    if (g >= num_gt || q >= nq || gt_seen[g] || q_seen[q]) {
      throw ContractError("assignment pair (" + std::to_string(g) + ", " +
                          std::to_string(q) + ") is out of range or repeated");
    }
    gt_seen[g] = q_seen[q] = 1;
  }
}

}  // namespace

LossBreakdown composite_loss(const Predictions& p, std::span<const GroundTruth> gts,
                             const Assignment& a, const LossWeights& w) {
  const std::size_t nq = p.num_queries();
  const std::size_t k = p.num_classes();
  check_assignment(a, gts.size(), nq);

  std::vector<std::size_t> target(nq, k);
  std::vector<double> weight(nq, w.noobj_weight);
  for (const auto& [g, q] : a.pairs) {
    const int cls = gts[g].class_id;
    if (cls < 0 || static_cast<std::size_t>(cls) >= k) {
      throw IndexError("ground truth class " + std::to_string(cls) + " outside [0, " +
                       std::to_string(k) + ")");
    }
    target[q] = static_cast<std::size_t>(cls);
    weight[q] = 1.0;
  }
  const Tensor logp = pick(log_softmax(p.class_logits, 1), target);
  const Tensor cls = scale(sum(mul(logp, Tensor::vector(weight))),
                           -1.0 / static_cast<double>(nq));

  LossBreakdown out;
  out.values.cls = cls.item();
  Tensor total = scale(cls, w.lambda_cls);
  if (!a.pairs.empty()) {
    const std::size_t m = a.pairs.size();
    std::vector<std::size_t> rows(m);
    std::vector<double> gt_boxes(m * 4);
    for (std::size_t t = 0; t < m; ++t) {
      const auto& [g, q] = a.pairs[t];
      rows[t] = q;
      const BoxCS& b = gts[g].box;
      gt_boxes[t * 4 + 0] = b.cx;
      gt_boxes[t * 4 + 1] = b.cy;
      gt_boxes[t * 4 + 2] = b.w;
      gt_boxes[t * 4 + 3] = b.h;
    }
    const Tensor pred = gather_rows(p.boxes, rows);
    const Tensor target_boxes = Tensor::matrix(m, 4, std::move(gt_boxes));
    const double inv_m = 1.0 / static_cast<double>(m);
    const Tensor l1 = scale(sum(abs(pred - target_boxes)), inv_m);
    const Tensor giou = scale(sum(add_scalar(neg(giou_tensor(pred, target_boxes)), 1.0)), inv_m);
    out.values.l1 = l1.item();
    out.values.giou = giou.item();
    total = total + scale(l1, w.lambda_l1) + scale(giou, w.lambda_giou);
  }
  out.values.total = total.item();
  out.graph = std::move(total);
  return out;
}

}  // namespace rtdetr
