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

#include "rtdetr/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "rtdetr/box.hpp"
#include "rtdetr/losses.hpp"

namespace rtdetr {

CostMatrix random_cost_matrix(Rng& rng) {
  const auto m = static_cast<std::size_t>(rng.uniform_int(1, 7));
  const auto n = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(m), 10));
  CostMatrix c(m, n);
  const bool integral = rng.uniform() < 0.5;
  for (double& v : c.values) {
    v = integral ? static_cast<double>(rng.uniform_int(0, 4)) : rng.uniform(-2.0, 2.0);
  }
  return c;
}

ConformanceResult matching_conformance(std::size_t trials, std::uint64_t seed) {
  ConformanceResult r;
  Rng rng(seed, 0xA551);
  for (std::size_t t = 0; t < trials; ++t) {
    const CostMatrix c = random_cost_matrix(rng);
    const Assignment fast = hungarian(c);
    const Assignment slow = brute_force_match(c);
    ++r.trials;
    r.max_abs_diff = std::max(r.max_abs_diff, std::fabs(fast.total_cost - slow.total_cost));
    if (fast.total_cost != slow.total_cost || fast.pairs != slow.pairs) {
      if (r.mismatches++ == 0) {
        std::ostringstream os;
        os << "trial " << t << ": " << c.rows << "x" << c.cols << " cost " << fast.total_cost
           << " vs " << slow.total_cost;
        r.first_failure = os.str();
      }
    }
  }
  return r;
}

namespace {

BoxCS random_box(Rng& rng) {
  const double w = rng.uniform(0.02, 0.4), h = rng.uniform(0.02, 0.4);
  return {rng.uniform(w / 2, 1.0 - w / 2), rng.uniform(h / 2, 1.0 - h / 2), w, h};
}

BoxCS jitter(Rng& rng, const BoxCS& b) {
  const double s = rng.uniform(0.0, 0.3);
  return {b.cx + s * b.w * rng.uniform(-1.0, 1.0), b.cy + s * b.h * rng.uniform(-1.0, 1.0),
          b.w * (1.0 + s * rng.uniform(-1.0, 1.0)), b.h * (1.0 + s * rng.uniform(-1.0, 1.0))};
}

}  // namespace

std::vector<EvalSample> random_eval_set(Rng& rng) {
  const auto images = rng.uniform_int(1, 4);
  const bool coarse_scores = rng.uniform() < 0.3;  // many score ties
  std::vector<EvalSample> out;
  for (std::int64_t i = 0; i < images; ++i) {
    EvalSample s;
    s.image_id = "img" + std::to_string(i);
    const auto ngt = rng.uniform_int(0, 8);
    for (std::int64_t g = 0; g < ngt; ++g) {
      s.ground_truths.push_back({static_cast<int>(rng.uniform_int(0, 2)), random_box(rng)});
    }
    const auto ndet = rng.uniform_int(0, 20);
    for (std::int64_t d = 0; d < ndet; ++d) {
      Detection det;
      if (!s.ground_truths.empty() && rng.uniform() < 0.7) {
        const auto& g = s.ground_truths[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(s.ground_truths.size()) - 1))];
        det.box = jitter(rng, g.box);
        det.class_id = rng.uniform() < 0.85 ? g.class_id : static_cast<int>(rng.uniform_int(0, 3));
      } else {
        det.box = random_box(rng);
        det.class_id = static_cast<int>(rng.uniform_int(0, 3));
      }
      det.score = coarse_scores ? static_cast<double>(rng.uniform_int(1, 5)) / 5.0
                                : rng.uniform(0.01, 1.0);
      det.query = static_cast<std::size_t>(d);
      s.detections.push_back(det);
    }
    out.push_back(std::move(s));
  }
  return out;
}

ConformanceResult metrics_conformance(std::size_t trials, std::uint64_t seed, double tol) {
  ConformanceResult r;
  Rng rng(seed, 0x3E7);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto samples = random_eval_set(rng);
    const MetricsReport fast = evaluate(samples);
    const MetricsReport slow = brute_force_map(samples);
    ++r.trials;
    const double diff = std::max({std::fabs(fast.precision - slow.precision),
                                  std::fabs(fast.recall - slow.recall),
                                  std::fabs(fast.map50 - slow.map50),
                                  std::fabs(fast.map50_95 - slow.map50_95)});
    r.max_abs_diff = std::max(r.max_abs_diff, diff);
    if (!(diff <= tol)) {
      if (r.mismatches++ == 0) {
        std::ostringstream os;
        os << "trial " << t << ": max difference " << diff;
        r.first_failure = os.str();
      }
    }
  }
  return r;
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.image_size = 16;
  c.patch_sizes = {4, 8};
  c.d_model = 8;
  c.num_heads = 2;
  c.num_encoder_layers = 1;
  c.num_decoder_layers = 1;
  c.num_queries = 4;
  c.num_classes = 2;
  return c;
}

GradReport model_gradcheck(std::uint64_t seed, double h) {
  const ModelConfig config = tiny_model_config();
  DetectionModel model(config, seed);
  Rng rng(seed, 0x6C);
  Image image(config.image_size, config.image_size, config.channels);
  for (double& v : image.pixels) v = rng.uniform();
  const std::vector<GroundTruth> gts = {{0, {0.3, 0.35, 0.2, 0.25}}, {1, {0.7, 0.6, 0.3, 0.2}}};
  const LossWeights weights;
  const Assignment a = hungarian(build_cost_matrix(model.forward(image), gts, MatchWeights{}));
  auto loss = [&] { return composite_loss(model.forward(image), gts, a, weights).graph; };
  return finite_diff_check(loss, model.params().entries(), h);
}

namespace {

Tensor random_leaf(Rng& rng, Shape dims, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(dims));
  for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

Tensor fixed_leaf(std::vector<double> values) {
  Tensor t = Tensor::vector(std::move(values));
  t.set_requires_grad(true);
  return t;
}

// sum(y * w) with fixed weights in [0.5, 1.5], so no output is reduced to
// a constant (sum(softmax) would have zero gradient).
Tensor weighted_sum(const Tensor& y, std::uint64_t stream) {
  Rng rng(stream, 99);
  Tensor w(y.dims());
  for (double& v : w.mutable_data()) v = rng.uniform(0.5, 1.5);
  return sum(mul(y, w));
}

Tensor random_boxes(Rng& rng, std::size_t m) {
  std::vector<double> v;
  for (std::size_t i = 0; i < m; ++i) {
    const double w = rng.uniform(0.1, 0.5), hh = rng.uniform(0.1, 0.5);
    v.insert(v.end(), {rng.uniform(w / 2, 1 - w / 2), rng.uniform(hh / 2, 1 - hh / 2), w, hh});
  }
  Tensor t = Tensor::matrix(m, 4, v);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

std::vector<OpCheck> op_gradchecks(std::uint64_t seed, double h) {
  Rng rng(seed, 0x0B);
  std::vector<OpCheck> out;
  auto check = [&](std::string op, const std::function<Tensor()>& f,
                   std::vector<NamedTensor> params) {
    out.push_back({std::move(op), finite_diff_check(f, params, h)});
  };

  {
    Tensor a = random_leaf(rng, {3, 4}), b = random_leaf(rng, {4, 5});
    check("matmul", [&] { return weighted_sum(matmul(a, b), 1); }, {{"a", a}, {"b", b}});
  }
  {
    Tensor a = random_leaf(rng, {3, 4});
    check("transpose", [&] { return weighted_sum(transpose(a), 2); }, {{"a", a}});
    check("reshape", [&] { return weighted_sum(reshape(a, {2, 6}), 3); }, {{"a", a}});
  }
  {
    Tensor a = random_leaf(rng, {3, 4}), b = random_leaf(rng, {4}), s = random_leaf(rng, {1});
    check("add/sub (broadcast)", [&] { return weighted_sum(sub(add(a, b), s), 4); },
          {{"a", a}, {"b", b}, {"s", s}});
  }
  {
    Tensor a = random_leaf(rng, {2, 3}), b = random_leaf(rng, {2, 3}, 0.5, 2.0);
    check("mul/div", [&] { return weighted_sum(div(mul(a, b), mul(b, b)), 5); },
          {{"a", a}, {"b", b}});
  }
  {
    Tensor a = fixed_leaf({0.1, 0.9, -0.4, 0.3}), b = fixed_leaf({0.5, 0.2, -0.8, 0.6});
    check("maximum/minimum",
          [&] { return weighted_sum(add(maximum(a, b), scale(minimum(a, b), 3.0)), 6); },
          {{"a", a}, {"b", b}});
  }
  {
    Tensor a = random_leaf(rng, {5});
    check("scale/add_scalar/neg",
          [&] { return weighted_sum(neg(add_scalar(scale(a, 1.7), 0.3)), 7); }, {{"a", a}});
  }
  {
    Tensor a = fixed_leaf({-0.8, -0.1, 0.2, 1.5});
    check("relu", [&] { return weighted_sum(relu(a), 8); }, {{"a", a}});
    Tensor b = fixed_leaf({-0.6, 0.25, 1.1});
    check("abs", [&] { return weighted_sum(abs(b), 10); }, {{"b", b}});
  }
  {
    Tensor a = random_leaf(rng, {6}), p = random_leaf(rng, {6}, 0.2, 3.0);
    check("sigmoid/exp/log",
          [&] { return weighted_sum(add(sigmoid(a), add(exp(a), log(p))), 9); },
          {{"a", a}, {"p", p}});
  }
  {
    Tensor a = random_leaf(rng, {3, 4}, -2, 2);
    check("softmax", [&] { return weighted_sum(add(softmax(a, 0), softmax(a, 1)), 11); },
          {{"a", a}});
    Tensor b = random_leaf(rng, {3, 5}, -3, 3);
    check("log_softmax", [&] { return weighted_sum(log_softmax(b, 1), 12); }, {{"b", b}});
  }
  {
    Tensor x = random_leaf(rng, {3, 6}, -2, 2), g = random_leaf(rng, {6}, 0.5, 1.5),
           b = random_leaf(rng, {6});
    check("layer_norm", [&] { return weighted_sum(layer_norm(x, g, b), 13); },
          {{"x", x}, {"g", g}, {"b", b}});
  }
  {
    Tensor a = random_leaf(rng, {2, 3});
    check("sum/mean", [&] { return add(sum(mul(a, a)), scale(mean(exp(a)), 2.0)); },
          {{"a", a}});
  }
  {
    Tensor a = random_leaf(rng, {2, 3}), b = random_leaf(rng, {2, 2});
    check("concat/slice",
          [&] {
            const Tensor parts[] = {a, b};
            const Tensor c = concat(parts, 1);
            const Tensor rows[] = {slice(c, 1, 1, 3), slice(c, 1, 0, 3)};
            return weighted_sum(concat(rows, 0), 14);
          },
          {{"a", a}, {"b", b}});
  }
  {
    Tensor a = random_leaf(rng, {4, 3});
    const std::size_t rows[] = {2, 0, 2, 3};
    const std::size_t cols[] = {1, 0, 2, 2};
    check("gather_rows/pick",
          [&] { return add(weighted_sum(gather_rows(a, rows), 15), sum(pick(a, cols))); },
          {{"a", a}});
  }
  {
    Tensor a = random_boxes(rng, 6), b = random_boxes(rng, 6);
    check("giou/iou",
          [&] { return add(sum(giou_tensor(a, b)), scale(sum(iou_tensor(a, b)), 0.5)); },
          {{"a", a}, {"b", b}});
  }
  return out;
}

}  // namespace rtdetr
