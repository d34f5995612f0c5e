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

#ifndef RTDETR_BOX_HPP_
#define RTDETR_BOX_HPP_

#include "rtdetr/tensor.hpp"

namespace rtdetr {

// Center/size box in normalized image coordinates.
struct BoxCS {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  friend bool operator==(const BoxCS&, const BoxCS&) = default;
};

// Corner box, x1 <= x2 and y1 <= y2.
struct BoxXY {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  friend bool operator==(const BoxXY&, const BoxXY&) = default;
};

BoxXY to_corner(const BoxCS& b);
BoxCS to_center(const BoxXY& b);

double area(const BoxXY& b);

// Intersection over union; 0 when the union is empty.
double iou(const BoxXY& a, const BoxXY& b);
inline double iou(const BoxCS& a, const BoxCS& b) {
  return iou(to_corner(a), to_corner(b));
}

// IoU - (hull - union) / hull. Returns 0 when the enclosing hull has zero
// area (both boxes are the same point or lie on a common line).
double giou(const BoxXY& a, const BoxXY& b);
inline double giou(const BoxCS& a, const BoxCS& b) {
  return giou(to_corner(a), to_corner(b));
}

// |dcx| + |dcy| + |dw| + |dh|.
double l1_box(const BoxCS& a, const BoxCS& b);

// Differentiable GIoU between row-aligned [M x 4] center/size tensors.
// Boxes must have positive area; returns a length-M tensor.
Tensor giou_tensor(const Tensor& a_cs, const Tensor& b_cs);

// Differentiable IoU, same layout as giou_tensor.
Tensor iou_tensor(const Tensor& a_cs, const Tensor& b_cs);

Tensor box_to_tensor(const BoxCS& b);

}  // namespace rtdetr

#endif  // RTDETR_BOX_HPP_
