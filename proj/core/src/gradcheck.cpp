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

#include "rtdetr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_set>

#include "rtdetr/errors.hpp"

namespace rtdetr {
namespace {

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

void mix(std::uint64_t& h, std::uint64_t v) {
  h ^= v;
  h *= kFnvPrime;
}

// Times the step shrinks by 10x when a probe straddles a kink.
constexpr int kMaxRefinements = 4;

// Rounding in the two loss evaluations limits a central difference to about
// eps * |f| / step; this many such units are not counted as error.
constexpr double kRoundoffUlps = 4.0;

struct Probe {
  double value;
  std::uint64_t signature;
};

Probe evaluate(const std::function<Tensor()>& loss_fn) {
  Tensor loss = loss_fn();
  if (loss.size() != 1) {
    throw ContractError("finite_diff_check: loss must be a single element");
  }
  const double v = loss.item();
  if (!std::isfinite(v)) {
    throw NumericError("finite_diff_check: loss evaluated to a non-finite value");
  }
  return {v, branch_signature(loss)};
}

}  // namespace

std::uint64_t branch_signature(const Tensor& root) {
  std::uint64_t h = kFnvOffset;
  std::vector<Tensor> stack{root};
  std::unordered_set<const void*> seen{root.impl().get()};
  while (!stack.empty()) {
    Tensor t = stack.back();
    stack.pop_back();
    const std::string_view op = t.op();
    const auto parents = t.parents();
    if (op == "relu" || op == "abs") {
      for (double x : parents[0].data()) {
        mix(h, x > 0.0 ? 1u : (x < 0.0 ? 2u : 3u));
      }
    } else if (op == "maximum" || op == "minimum") {
      const auto a = parents[0].data();
      const auto b = parents[1].data();
      const std::size_t n = std::max(a.size(), b.size());
      for (std::size_t i = 0; i < n; ++i) {
        const double x = a[a.size() == 1 ? 0 : i];
        const double y = b[b.size() == 1 ? 0 : i];
        mix(h, x > y ? 1u : (x < y ? 2u : 3u));
      }
    }
    for (const Tensor& p : parents) {
      if (p.has_node() && seen.insert(p.impl().get()).second) stack.push_back(p);
    }
  }
  return h;
}

GradReport finite_diff_check(const std::function<Tensor()>& loss_fn,
                             std::vector<NamedTensor>& params, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_check: step must be positive");

  for (auto& p : params) {
    p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }
  const Probe base = [&] {
    Tensor loss = loss_fn();
    const Probe probe{loss.item(), branch_signature(loss)};
    if (!std::isfinite(probe.value)) {
      throw NumericError("finite_diff_check: loss evaluated to a non-finite value");
    }
    if (loss.has_node()) loss.backward();
    return probe;
  }();

  GradReport report;
  for (auto& p : params) {
    std::vector<double> analytic(p.tensor.size(), 0.0);
    if (p.tensor.has_grad()) {
      const auto g = p.tensor.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    auto values = p.tensor.mutable_data();
    ParamError entry{p.name, 0.0};
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      double step = h;
      bool smooth = false;
      double numeric = 0.0;
      for (int attempt = 0; attempt <= kMaxRefinements; ++attempt) {
        values[i] = original + step;
        const Probe plus = evaluate(loss_fn);
        values[i] = original - step;
        const Probe minus = evaluate(loss_fn);
        values[i] = original;
        numeric = (plus.value - minus.value) / (2.0 * step);
        if (plus.signature == base.signature &&
            minus.signature == base.signature) {
          smooth = true;
          if (attempt > 0) ++report.refined;
          break;
        }
        step *= 0.1;
      }
      ++report.checked;
      if (!smooth) {
        ++report.skipped;
        continue;
      }
      const double noise = kRoundoffUlps * std::numeric_limits<double>::epsilon() *
                           std::max(1.0, std::fabs(base.value)) / step;
      report.roundoff_floor = std::max(report.roundoff_floor, noise);
      const double a = analytic[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-12});
      const double excess = std::max(0.0, std::fabs(a - numeric) - noise);
      entry.max_rel_error = std::max(entry.max_rel_error, excess / denom);
      report.max_raw_rel_error =
          std::max(report.max_raw_rel_error, std::fabs(a - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.per_parameter.push_back(std::move(entry));
  }
  return report;
}

}  // namespace rtdetr
