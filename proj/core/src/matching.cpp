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

#include "rtdetr/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rtdetr/errors.hpp"

namespace rtdetr {

void MatchWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) {
    throw ConfigError("match weights must be non-negative");
  }
  if (alpha == 0.0 && beta == 0.0) {
    throw ConfigError("match weights alpha and beta cannot both be zero");
  }
}

CostMatrix::CostMatrix(std::size_t r, std::size_t c, std::vector<double> v)
    : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != r * c) {
    throw DimensionError("cost matrix " + std::to_string(r) + "x" +
                         std::to_string(c) + " given " +
                         std::to_string(values.size()) + " values");
  }
}

double match_score(double s_cls, double s_loc, const MatchWeights& w) {
  return w.alpha * s_cls + w.beta * s_loc;
}

CostMatrix build_cost_matrix(const Predictions& p, std::span<const GroundTruth> gts,
                             const MatchWeights& w) {
  const std::size_t nq = p.num_queries();
  const std::size_t k = p.num_classes();
  if (gts.size() > nq) {
    throw CapacityError(std::to_string(gts.size()) + " ground truths exceed " +
                        std::to_string(nq) + " queries");
  }
  const auto logits = p.class_logits.data();
  std::vector<double> prob((k + 1) * nq);
  for (std::size_t i = 0; i < nq; ++i) {
    const double* row = logits.data() + i * (k + 1);
    const double mx = *std::max_element(row, row + k + 1);
    double total = 0.0;
    for (std::size_t c = 0; c <= k; ++c) total += prob[i * (k + 1) + c] = std::exp(row[c] - mx);
    for (std::size_t c = 0; c <= k; ++c) prob[i * (k + 1) + c] /= total;
  }
  std::vector<BoxCS> boxes(nq);
  for (std::size_t i = 0; i < nq; ++i) boxes[i] = p.box(i);

  CostMatrix cost(gts.size(), nq);
  for (std::size_t j = 0; j < gts.size(); ++j) {
    const GroundTruth& gt = gts[j];
    if (gt.class_id < 0 || static_cast<std::size_t>(gt.class_id) >= k) {
      throw IndexError("ground truth class " + std::to_string(gt.class_id) +
                       " outside [0, " + std::to_string(k) + ")");
    }
    const BoxXY gxy = to_corner(gt.box);
    for (std::size_t i = 0; i < nq; ++i) {
      const double s_cls = prob[i * (k + 1) + static_cast<std::size_t>(gt.class_id)];
      const double s_loc = giou(to_corner(boxes[i]), gxy) - l1_box(boxes[i], gt.box);
      cost(j, i) = -match_score(s_cls, s_loc, w);
    }
  }
  return cost;
}

namespace {

void check_finite(const CostMatrix& cost) {
  for (double v : cost.values) {
    if (!std::isfinite(v)) throw NumericError("cost matrix contains a non-finite entry");
  }
}

double row_order_total(const CostMatrix& cost,
                       const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  double total = 0.0;
  for (const auto& [r, c] : pairs) total += cost(r, c);
  return total;
}

// Bipartite matching over "tight" edges, used to pick the lexicographically
// smallest optimal assignment once optimal potentials are known.
class TightGraph {
 public:
  TightGraph(const CostMatrix& cost, const std::vector<double>& u,
             const std::vector<double>& v, double tol)
      : rows_(cost.rows), cols_(cost.cols), adj_(cost.rows), radj_(cost.cols) {
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t j = 0; j < cols_; ++j) {
        if (cost(i, j) - u[i] - v[j] <= tol) {
          adj_[i].push_back(j);
          radj_[j].push_back(i);
        }
      }
    }
    for (std::size_t j = 0; j < cols_; ++j) {
      if (v[j] < -tol) mandatory_.push_back(j);
    }
  }

  const std::vector<std::size_t>& candidates(std::size_t row) const { return adj_[row]; }

  // Can rows > `fixed_upto` be completed using free columns such that every
  // free mandatory column is covered? Mendelsohn-Dulmage: a row-saturating
  // matching and a mandatory-column-saturating matching together imply one
  // matching that saturates both.
  bool feasible(std::size_t first_free_row, const std::vector<char>& col_used) const {
    // Rows first.
    std::vector<std::ptrdiff_t> col_match(cols_, -1);
    for (std::size_t i = first_free_row; i < rows_; ++i) {
      std::vector<char> seen(cols_, 0);
      if (!augment_row(i, col_used, col_match, seen)) return false;
    }
    // Mandatory columns against free rows.
    std::vector<std::ptrdiff_t> row_match(rows_, -1);
    for (std::size_t j : mandatory_) {
      if (col_used[j]) continue;
      std::vector<char> seen(rows_, 0);
      if (!augment_col(j, first_free_row, row_match, seen)) return false;
    }
    return true;
  }

 private:
  bool augment_row(std::size_t i, const std::vector<char>& col_used,
                   std::vector<std::ptrdiff_t>& col_match, std::vector<char>& seen) const {
    for (std::size_t j : adj_[i]) {
      if (col_used[j] || seen[j]) continue;
      seen[j] = 1;
      if (col_match[j] < 0 ||
          augment_row(static_cast<std::size_t>(col_match[j]), col_used, col_match, seen)) {
        col_match[j] = static_cast<std::ptrdiff_t>(i);
        return true;
      }
    }
    return false;
  }

  bool augment_col(std::size_t j, std::size_t first_free_row,
                   std::vector<std::ptrdiff_t>& row_match, std::vector<char>& seen) const {
    for (std::size_t i : radj_[j]) {
      if (i < first_free_row || seen[i]) continue;
      seen[i] = 1;
      if (row_match[i] < 0 ||
          augment_col(static_cast<std::size_t>(row_match[i]), first_free_row, row_match, seen)) {
        row_match[i] = static_cast<std::ptrdiff_t>(j);
        return true;
      }
    }
    return false;
  }

  std::size_t rows_, cols_;
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<std::vector<std::size_t>> radj_;
  std::vector<std::size_t> mandatory_;
};

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
  const std::size_t m = cost.rows, n = cost.cols;
  if (m > n) {
    throw CapacityError("hungarian: " + std::to_string(m) + " rows exceed " +
                        std::to_string(n) + " columns");
  }
  check_finite(cost);
  Assignment out;
  if (m == 0) return out;

  // 1-based shortest augmenting path with row potentials u and column
  // potentials v; column 0 is a sentinel. v only ever decreases, so v <= 0,
  // and every column with v < 0 ends up matched.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(m + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= m; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::pair<std::size_t, std::size_t>> base(m);
  for (std::size_t j = 1; j <= n; ++j) {
    if (match[j] != 0) base[match[j] - 1] = {match[j] - 1, j - 1};
  }
  const double base_total = row_order_total(cost, base);

  // Lexicographic tie-break: greedily take the smallest tight column per row
  // that still admits an optimal completion.
  double scale = 1.0;
  for (double c : cost.values) scale = std::max(scale, std::fabs(c));
  const double tol = 1e-9 * scale;
  const std::vector<double> u0(u.begin() + 1, u.end());
  const std::vector<double> v0(v.begin() + 1, v.end());
  const TightGraph graph(cost, u0, v0, tol);

  std::vector<std::pair<std::size_t, std::size_t>> lex;
  lex.reserve(m);
  std::vector<char> col_used(n, 0);
  bool ok = true;
  for (std::size_t i = 0; i < m && ok; ++i) {
    ok = false;
    for (std::size_t j : graph.candidates(i)) {
      if (col_used[j]) continue;
      col_used[j] = 1;
      if (graph.feasible(i + 1, col_used)) {
        lex.emplace_back(i, j);
        ok = true;
        break;
      }
      col_used[j] = 0;
    }
  }
  if (ok) {
    const double lex_total = row_order_total(cost, lex);
    if (lex_total <= base_total) {
      out.pairs = std::move(lex);
      out.total_cost = lex_total;
      return out;
    }
  }
  out.pairs = std::move(base);
  out.total_cost = base_total;
  return out;
}

namespace {

struct BruteForce {
  const CostMatrix& cost;
  std::vector<std::size_t> current;
  std::vector<std::size_t> best;
  std::vector<char> used;
  double best_total = std::numeric_limits<double>::infinity();

  void search(std::size_t row, double partial) {
    if (row == cost.rows) {
      if (partial < best_total) {
        best_total = partial;
        best = current;
      }
      return;
    }
    for (std::size_t j = 0; j < cost.cols; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      current[row] = j;
      search(row + 1, partial + cost(row, j));
      used[j] = 0;
    }
  }
};

}  // namespace

Assignment brute_force_match(const CostMatrix& cost) {
  if (cost.rows > 8) {
    throw SizeError("brute_force_match: " + std::to_string(cost.rows) +
                    " rows exceed the enumeration guard of 8");
  }
  if (cost.rows > cost.cols) {
    throw CapacityError("brute_force_match: " + std::to_string(cost.rows) +
                        " rows exceed " + std::to_string(cost.cols) + " columns");
  }
  check_finite(cost);
  Assignment out;
  if (cost.rows == 0) return out;
  BruteForce bf{cost, std::vector<std::size_t>(cost.rows), {}, std::vector<char>(cost.cols, 0)};
  bf.search(0, 0.0);
  for (std::size_t i = 0; i < cost.rows; ++i) out.pairs.emplace_back(i, bf.best[i]);
  out.total_cost = bf.best_total;
  return out;
}

}  // namespace rtdetr
