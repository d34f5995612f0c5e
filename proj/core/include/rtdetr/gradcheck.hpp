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

#ifndef RTDETR_GRADCHECK_HPP_
#define RTDETR_GRADCHECK_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rtdetr/tensor.hpp"

namespace rtdetr {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ParamError {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradReport {
  std::vector<ParamError> per_parameter;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Entries whose +-h probe crossed a kink (relu, abs, min/max branch) and
  // were re-probed with a smaller step.
  std::size_t refined = 0;
  // Entries that still straddled a kink at the smallest step; excluded from
  // max_rel_error and reported here instead.
  std::size_t skipped = 0;
  // Largest finite-difference rounding allowance that was subtracted from an
  // absolute discrepancy (see finite_diff_check).
  double roundoff_floor = 0.0;
  // Same ratio without that allowance; informational.
  double max_raw_rel_error = 0.0;

  bool passed(double tolerance) const {
    return skipped == 0 && max_rel_error < tolerance;
  }
};

// Compares the reverse-mode gradient of `loss_fn` against central
// differences (f(p+h) - f(p-h)) / 2h for every element of every parameter.
// Relative error is (|analytic - numeric| - r) / max(|analytic|, |numeric|,
// 1e-12), clamped at 0, where r = 4 eps max(1, |f|) / step is the rounding
// level of the difference quotient itself.
//
// `loss_fn` must rebuild its graph from the current parameter values on each
// call and be deterministic. Parameter gradients are overwritten.
GradReport finite_diff_check(const std::function<Tensor()>& loss_fn,
                             std::vector<NamedTensor>& params, double h = 1e-5);

// Fingerprint of the branch taken by every non-smooth op (relu, abs,
// maximum, minimum) in the graph below `root`.
std::uint64_t branch_signature(const Tensor& root);

}  // namespace rtdetr

#endif  // RTDETR_GRADCHECK_HPP_
