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

#ifndef RTDETR_MATCHING_HPP_
#define RTDETR_MATCHING_HPP_

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "rtdetr/model.hpp"

namespace rtdetr {

// Weights of the match score alpha * s_cls + beta * s_loc.
struct MatchWeights {
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const;
};

// Dense row-major matrix; rows are ground truths, columns are queries.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}
  CostMatrix(std::size_t r, std::size_t c, std::vector<double> v);

  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

// One pair per row (gt_index, query_index), sorted by gt_index.
struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double total_cost = 0.0;
};

double match_score(double s_cls, double s_loc, const MatchWeights& w);

// entry(j, i) = -match_score(p_i(class_j), giou(box_i, box_j) - l1(box_i, box_j)).
CostMatrix build_cost_matrix(const Predictions& p, std::span<const GroundTruth> gts,
                             const MatchWeights& w);

// Minimum-cost injective row -> column assignment for rows <= cols, via
// shortest augmenting paths with potentials (O(rows^2 * cols)). Among optimal
// assignments the lexicographically smallest column sequence is returned.
// total_cost is summed in row order.
Assignment hungarian(const CostMatrix& cost);

// Exhaustive enumeration of injective maps in lexicographic order; keeps the
// first strict minimum. rows <= 8.
Assignment brute_force_match(const CostMatrix& cost);

}  // namespace rtdetr

#endif  // RTDETR_MATCHING_HPP_
