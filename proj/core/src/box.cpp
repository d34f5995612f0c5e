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

#include "rtdetr/box.hpp"

#include <algorithm>
#include <cmath>

#include "rtdetr/errors.hpp"

namespace rtdetr {

BoxXY to_corner(const BoxCS& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

BoxCS to_center(const BoxXY& b) {
  return {0.5 * (b.x1 + b.x2), 0.5 * (b.y1 + b.y2), b.x2 - b.x1, b.y2 - b.y1};
}

double area(const BoxXY& b) {
  return std::max(0.0, b.x2 - b.x1) * std::max(0.0, b.y2 - b.y1);
}

namespace {

double intersection(const BoxXY& a, const BoxXY& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return std::max(0.0, w) * std::max(0.0, h);
}

}  // namespace

double iou(const BoxXY& a, const BoxXY& b) {
  const double inter = intersection(a, b);
  const double uni = area(a) + area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const BoxXY& a, const BoxXY& b) {
  const double inter = intersection(a, b);
  const double uni = area(a) + area(b) - inter;
  const double hull = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) *
                      (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  if (hull <= 0.0) return 0.0;
  const double iou_v = uni > 0.0 ? inter / uni : 0.0;
  // hull >= union exactly; rounding in uni can invert that when one box
  // contains the other, so the penalty is clamped to keep giou <= iou.
  return iou_v - std::max(0.0, hull - uni) / hull;
}

double l1_box(const BoxCS& a, const BoxCS& b) {
  return std::fabs(a.cx - b.cx) + std::fabs(a.cy - b.cy) +
         std::fabs(a.w - b.w) + std::fabs(a.h - b.h);
}

Tensor box_to_tensor(const BoxCS& b) {
  return Tensor::vector({b.cx, b.cy, b.w, b.h});
}

namespace {

struct CornerCols {
  Tensor x1, y1, x2, y2, area;
};

CornerCols corner_columns(const Tensor& cs) {
  if (cs.rank() != 2 || cs.dim(1) != 4) {
    throw DimensionError("box tensor must be [M x 4], got " +
                         shape_to_string(cs.dims()));
  }
  const Tensor cx = slice(cs, 1, 0, 1);
  const Tensor cy = slice(cs, 1, 1, 1);
  const Tensor w = slice(cs, 1, 2, 1);
  const Tensor h = slice(cs, 1, 3, 1);
  const Tensor hw = scale(w, 0.5);
  const Tensor hh = scale(h, 0.5);
  return {cx - hw, cy - hh, cx + hw, cy + hh, w * h};
}

struct Overlap {
  Tensor inter, uni;
  CornerCols a, b;
};

Overlap overlap(const Tensor& a_cs, const Tensor& b_cs) {
  if (a_cs.dims() != b_cs.dims()) {
    throw DimensionError("box tensors differ: " + shape_to_string(a_cs.dims()) +
                         " vs " + shape_to_string(b_cs.dims()));
  }
  CornerCols a = corner_columns(a_cs);
  CornerCols b = corner_columns(b_cs);
  const Tensor iw = relu(minimum(a.x2, b.x2) - maximum(a.x1, b.x1));
  const Tensor ih = relu(minimum(a.y2, b.y2) - maximum(a.y1, b.y1));
  Tensor inter = iw * ih;
  Tensor uni = a.area + b.area - inter;
  return {std::move(inter), std::move(uni), std::move(a), std::move(b)};
}

}  // namespace

Tensor iou_tensor(const Tensor& a_cs, const Tensor& b_cs) {
  const Overlap o = overlap(a_cs, b_cs);
  return reshape(o.inter / o.uni, {a_cs.dim(0)});
}

Tensor giou_tensor(const Tensor& a_cs, const Tensor& b_cs) {
  const Overlap o = overlap(a_cs, b_cs);
  const Tensor hull = (maximum(o.a.x2, o.b.x2) - minimum(o.a.x1, o.b.x1)) *
                      (maximum(o.a.y2, o.b.y2) - minimum(o.a.y1, o.b.y1));
  const Tensor g = o.inter / o.uni - (hull - o.uni) / hull;
  return reshape(g, {a_cs.dim(0)});
}

}  // namespace rtdetr
