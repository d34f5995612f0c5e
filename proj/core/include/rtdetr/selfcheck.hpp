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

#ifndef RTDETR_SELFCHECK_HPP_
#define RTDETR_SELFCHECK_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rtdetr/gradcheck.hpp"
#include "rtdetr/matching.hpp"
#include "rtdetr/metrics.hpp"
#include "rtdetr/model.hpp"
#include "rtdetr/rng.hpp"

namespace rtdetr {

struct ConformanceResult {
  std::size_t trials = 0;
  std::size_t mismatches = 0;
  double max_abs_diff = 0.0;
  std::string first_failure;  // empty when everything agreed

  bool passed() const { return mismatches == 0; }
};

// Random cost matrices (1..7 rows, rows..10 columns; half of them drawn
// from a small integer set so ties are common): hungarian must equal
// brute_force_match in pairs and, exactly, in total cost.
CostMatrix random_cost_matrix(Rng& rng);
ConformanceResult matching_conformance(std::size_t trials, std::uint64_t seed);

// Random small evaluation sets (<= 20 detections, <= 8 ground truths per
// image): evaluate must equal brute_force_map within `tol` on precision,
// recall, mAP50 and mAP50-95.
std::vector<EvalSample> random_eval_set(Rng& rng);
ConformanceResult metrics_conformance(std::size_t trials, std::uint64_t seed, double tol = 1e-9);

// Image 16, patches {4, 8}, d_model 8, 2 heads, one encoder and one decoder
// layer, 4 queries, 2 classes.
ModelConfig tiny_model_config();

// Finite-difference check of forward + matching + composite loss on the tiny
// configuration (assignment computed once and held fixed).
GradReport model_gradcheck(std::uint64_t seed, double h = 1e-5);

struct OpCheck {
  std::string op;
  GradReport report;
};

// One finite-difference check per differentiable primitive (and the box
// ops built from them) on small random inputs. Kinked ops are probed away
// from their kinks.
std::vector<OpCheck> op_gradchecks(std::uint64_t seed, double h = 1e-5);

}  // namespace rtdetr

#endif  // RTDETR_SELFCHECK_HPP_
