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

#include "rtdetr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "rtdetr/errors.hpp"

namespace rtdetr {

using detail::Node;
using detail::TensorImpl;

std::string shape_to_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

namespace {

std::size_t product(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

void check_shape(const Shape& dims, std::size_t n) {
  if (dims.empty()) throw DimensionError("tensor rank must be at least 1");
  for (auto d : dims) {
    if (d == 0) {
      throw DimensionError("tensor extents must be positive, got " +
                           shape_to_string(dims));
    }
  }
  if (product(dims) != n) {
    throw DimensionError("data length " + std::to_string(n) +
                         " does not match shape " + shape_to_string(dims));
  }
}

using BackwardFn = std::function<void(const TensorImpl&)>;

Tensor make_result(Shape dims, std::vector<double> data, std::string_view op,
                   std::span<const Tensor* const> inputs, BackwardFn fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->dims = std::move(dims);
  impl->data = std::move(data);
  const bool needs_grad = std::any_of(
      inputs.begin(), inputs.end(),
      [](const Tensor* t) { return t->requires_grad(); });
  if (needs_grad) {
    impl->requires_grad = true;
    auto node = std::make_unique<Node>();
    node->op = op;
    node->parents.reserve(inputs.size());
    for (const Tensor* t : inputs) node->parents.push_back(t->impl());
    node->backward = std::move(fn);
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

Tensor make_result(Shape dims, std::vector<double> data, std::string_view op,
                   std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  return make_result(std::move(dims), std::move(data), op,
                     std::span<const Tensor* const>(inputs.begin(), inputs.size()),
                     std::move(fn));
}

enum class Broadcast { kSame, kScalarA, kScalarB, kRowB };

Broadcast classify(const Tensor& a, const Tensor& b, std::string_view op,
                   bool allow_row) {
  if (a.dims() == b.dims()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalarB;
  if (a.size() == 1) return Broadcast::kScalarA;
  if (allow_row && b.rank() == 1 && a.dims().back() == b.dim(0)) {
    return Broadcast::kRowB;
  }
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_to_string(a.dims()) + " and " +
                       shape_to_string(b.dims()));
}

// Elementwise binary op with the limited broadcasting rules above.
// da/db return the partial derivative of the output w.r.t. each operand.
template <typename F, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, std::string_view op,
                 bool allow_row, F f, DA da, DB db) {
  const Broadcast mode = classify(a, b, op, allow_row);
  const Shape out_dims = mode == Broadcast::kScalarA ? b.dims() : a.dims();
  const std::size_t n = product(out_dims);
  const std::size_t row = mode == Broadcast::kRowB ? b.size() : 0;
  auto ai = [mode](std::size_t i) {
    return mode == Broadcast::kScalarA ? std::size_t{0} : i;
  };
  auto bi = [mode, row](std::size_t i) {
    switch (mode) {
      case Broadcast::kScalarB: return std::size_t{0};
      case Broadcast::kRowB: return i % row;
      default: return i;
    }
  };
  const auto& ad = a.impl()->data;
  const auto& bd = b.impl()->data;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ad[ai(i)], bd[bi(i)]);

  TensorImpl* pa = a.impl().get();
  TensorImpl* pb = b.impl().get();
  return make_result(
      out_dims, std::move(out), op, {&a, &b},
      [pa, pb, ai, bi, da, db](const TensorImpl& o) {
        const std::size_t n = o.data.size();
        if (pa->requires_grad) {
          auto& g = pa->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            g[ai(i)] += o.grad[i] * da(pa->data[ai(i)], pb->data[bi(i)], o.data[i]);
          }
        }
        if (pb->requires_grad) {
          auto& g = pb->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            g[bi(i)] += o.grad[i] * db(pa->data[ai(i)], pb->data[bi(i)], o.data[i]);
          }
        }
      });
}

// df receives (x, y) where y = f(x).
template <typename F, typename DF>
Tensor unary_op(const Tensor& a, std::string_view op, F f, DF df) {
  const auto& ad = a.impl()->data;
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = f(ad[i]);
  TensorImpl* pa = a.impl().get();
  return make_result(a.dims(), std::move(out), op, {&a},
                     [pa, df](const TensorImpl& o) {
                       auto& g = pa->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += o.grad[i] * df(pa->data[i], o.data[i]);
                       }
                     });
}

void require_rank2(const Tensor& a, std::string_view op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " +
                         shape_to_string(a.dims()));
  }
}

void check_axis(const Tensor& a, std::size_t axis, std::string_view op) {
  if (axis >= a.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_to_string(a.dims()));
  }
}

struct AxisView {
  std::size_t outer, length, inner;
};

AxisView axis_view(const Shape& dims, std::size_t axis) {
  AxisView v{1, dims[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= dims[i];
  for (std::size_t i = axis + 1; i < dims.size(); ++i) v.inner *= dims[i];
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : Tensor(Shape{1}, 0.0) {}

Tensor::Tensor(Shape dims, double fill) {
  const std::size_t n = product(dims);
  check_shape(dims, n);
  impl_ = std::make_shared<TensorImpl>();
  impl_->dims = std::move(dims);
  impl_->data.assign(n, fill);
}

Tensor::Tensor(Shape dims, std::vector<double> data) {
  check_shape(dims, data.size());
  impl_ = std::make_shared<TensorImpl>();
  impl_->dims = std::move(dims);
  impl_->data = std::move(data);
}

Tensor::Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, value); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

const Shape& Tensor::dims() const { return impl_->dims; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->dims.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(impl_->dims));
  }
  return impl_->dims[axis];
}

std::size_t Tensor::size() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on tensor of shape " +
                        shape_to_string(impl_->dims));
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t i) const { return impl_->data.at(i); }

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2 || row >= dims()[0] || col >= dims()[1]) {
    throw IndexError("index (" + std::to_string(row) + ", " +
                     std::to_string(col) + ") out of range for " +
                     shape_to_string(dims()));
  }
  return impl_->data[row * dims()[1] + col];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  if (impl_->node) {
    throw ContractError("requires_grad can only be set on leaf tensors");
  }
  impl_->requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

bool Tensor::has_node() const { return static_cast<bool>(impl_->node); }

std::string_view Tensor::op() const {
  return impl_->node ? impl_->node->op : std::string_view("leaf");
}

std::vector<Tensor> Tensor::parents() const {
  std::vector<Tensor> out;
  if (impl_->node) {
    for (const auto& p : impl_->node->parents) out.emplace_back(p);
  }
  return out;
}

Tensor Tensor::detach() const { return Tensor(impl_->dims, impl_->data); }

Tensor Tensor::clone() const {
  Tensor t(impl_->dims, impl_->data);
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

void Tensor::backward() const {
  if (size() != 1) {
    throw ContractError("backward() needs a single-element loss, got shape " +
                        shape_to_string(dims()));
  }
  if (!impl_->node) {
    throw ContractError("backward() on a tensor without a computation graph");
  }
  // Post-order DFS gives a topological order (parents before children).
  std::vector<std::shared_ptr<TensorImpl>> order;
  std::unordered_set<const TensorImpl*> visited;
  std::vector<std::pair<std::shared_ptr<TensorImpl>, std::size_t>> stack;
  stack.emplace_back(impl_, 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (t->node && next < t->node->parents.size()) {
      auto parent = t->node->parents[next++];
      if (parent->requires_grad && visited.insert(parent.get()).second) {
        stack.emplace_back(std::move(parent), 0);
      }
      continue;
    }
    order.push_back(t);
    stack.pop_back();
  }

  impl_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl& t = **it;
    if (t.node && !t.grad.empty()) t.node->backward(t);
  }
  for (auto& t : order) {
    if (t->node) {
      t->node.reset();
      t->grad.clear();
      t->grad.shrink_to_fit();
    }
  }
}

// ---------------------------------------------------------------------------
// Linear algebra and shape ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: shape mismatch " + shape_to_string(a.dims()) +
                         " x " + shape_to_string(b.dims()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const double* A = a.impl()->data.data();
  const double* B = b.impl()->data.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  TensorImpl* pa = a.impl().get();
  TensorImpl* pb = b.impl().get();
  return make_result(
      {m, n}, std::move(out), "matmul", {&a, &b},
      [pa, pb, m, k, n](const TensorImpl& o) {
        const double* G = o.grad.data();
        if (pa->requires_grad) {
          auto& ga = pa->grad_buffer();
          const double* B = pb->data.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = G + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double* brow = B + p * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * k + p] += acc;
            }
          }
        }
        if (pb->requires_grad) {
          auto& gb = pb->grad_buffer();
          const double* A = pa->data.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = G + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double av = A[i * k + p];
              if (av == 0.0) continue;
              double* gbrow = gb.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto& d = a.impl()->data;
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = d[i * c + j];
  TensorImpl* pa = a.impl().get();
  return make_result({c, r}, std::move(out), "transpose", {&a},
                     [pa, r, c](const TensorImpl& o) {
                       auto& g = pa->grad_buffer();
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           g[i * c + j] += o.grad[j * r + i];
                     });
}

Tensor reshape(const Tensor& a, Shape dims) {
  check_shape(dims, a.size());
  TensorImpl* pa = a.impl().get();
  return make_result(std::move(dims), a.impl()->data, "reshape", {&a},
                     [pa](const TensorImpl& o) {
                       auto& g = pa->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                     });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", true, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", true, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", false, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) {
    throw DimensionError("div: shape mismatch " + shape_to_string(a.dims()) +
                         " and " + shape_to_string(b.dims()));
  }
  return binary_op(
      a, b, "div", false, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

// Ties route the gradient to the first operand.
Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "maximum", false, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "minimum", false, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      a, "scale", [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_op(
      a, "add_scalar", [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

// ---------------------------------------------------------------------------
// Normalizations

Tensor softmax(const Tensor& a, std::size_t axis) {
  check_axis(a, axis, "softmax");
  const AxisView v = axis_view(a.dims(), axis);
  const auto& d = a.impl()->data;
  std::vector<double> out(d.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.length * v.inner + in;
      double mx = d[base];
      for (std::size_t l = 1; l < v.length; ++l)
        mx = std::max(mx, d[base + l * v.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < v.length; ++l) {
        const double e = std::exp(d[base + l * v.inner] - mx);
        out[base + l * v.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < v.length; ++l) out[base + l * v.inner] /= total;
    }
  }
  TensorImpl* pa = a.impl().get();
  return make_result(a.dims(), std::move(out), "softmax", {&a},
                     [pa, v](const TensorImpl& o) {
                       auto& g = pa->grad_buffer();
                       for (std::size_t oi = 0; oi < v.outer; ++oi) {
                         for (std::size_t in = 0; in < v.inner; ++in) {
                           const std::size_t base = oi * v.length * v.inner + in;
                           double dot = 0.0;
                           for (std::size_t l = 0; l < v.length; ++l) {
                             const std::size_t idx = base + l * v.inner;
                             dot += o.grad[idx] * o.data[idx];
                           }
                           for (std::size_t l = 0; l < v.length; ++l) {
                             const std::size_t idx = base + l * v.inner;
                             g[idx] += o.data[idx] * (o.grad[idx] - dot);
                           }
                         }
                       }
                     });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  check_axis(a, axis, "log_softmax");
  const AxisView v = axis_view(a.dims(), axis);
  const auto& d = a.impl()->data;
  std::vector<double> out(d.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.length * v.inner + in;
      double mx = d[base];
      for (std::size_t l = 1; l < v.length; ++l)
        mx = std::max(mx, d[base + l * v.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < v.length; ++l)
        total += std::exp(d[base + l * v.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t l = 0; l < v.length; ++l)
        out[base + l * v.inner] = d[base + l * v.inner] - lse;
    }
  }
  TensorImpl* pa = a.impl().get();
  return make_result(a.dims(), std::move(out), "log_softmax", {&a},
                     [pa, v](const TensorImpl& o) {
                       auto& g = pa->grad_buffer();
                       for (std::size_t oi = 0; oi < v.outer; ++oi) {
                         for (std::size_t in = 0; in < v.inner; ++in) {
                           const std::size_t base = oi * v.length * v.inner + in;
                           double gsum = 0.0;
                           for (std::size_t l = 0; l < v.length; ++l)
                             gsum += o.grad[base + l * v.inner];
                           for (std::size_t l = 0; l < v.length; ++l) {
                             const std::size_t idx = base + l * v.inner;
                             g[idx] += o.grad[idx] - std::exp(o.data[idx]) * gsum;
                           }
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t n = x.dims().back();
  if (gain.rank() != 1 || bias.rank() != 1 || gain.size() != n ||
      bias.size() != n) {
    throw DimensionError("layer_norm: gain " + shape_to_string(gain.dims()) +
                         " / bias " + shape_to_string(bias.dims()) +
                         " do not match last axis of " +
                         shape_to_string(x.dims()));
  }
  const std::size_t rows = x.size() / n;
  const auto& d = x.impl()->data;
  const auto& gd = gain.impl()->data;
  const auto& bd = bias.impl()->data;
  std::vector<double> out(d.size());
  std::vector<double> xhat(d.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = d.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (row[j] - mu) * rstd[r];
      out[r * n + j] = xhat[r * n + j] * gd[j] + bd[j];
    }
  }
  TensorImpl* px = x.impl().get();
  TensorImpl* pg = gain.impl().get();
  TensorImpl* pb = bias.impl().get();
  return make_result(
      x.dims(), std::move(out), "layer_norm", {&x, &gain, &bias},
      [px, pg, pb, n, rows, xhat = std::move(xhat),
       rstd = std::move(rstd)](const TensorImpl& o) {
        if (pg->requires_grad) {
          auto& g = pg->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j)
              g[j] += o.grad[r * n + j] * xhat[r * n + j];
        }
        if (pb->requires_grad) {
          auto& g = pb->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[r * n + j];
        }
        if (px->requires_grad) {
          auto& g = px->grad_buffer();
          const auto& gd = pg->data;
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = o.grad[r * n + j] * gd[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat[r * n + j];
            }
            mean_dxhat *= inv_n;
            mean_dxhat_xhat *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = o.grad[r * n + j] * gd[j];
              g[r * n + j] += rstd[r] * (dxh - mean_dxhat -
                                         xhat[r * n + j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  const auto& d = a.impl()->data;
  double total = 0.0;
  for (double v : d) total += v;
  TensorImpl* pa = a.impl().get();
  return make_result({1}, {total}, "sum", {&a}, [pa](const TensorImpl& o) {
    auto& g = pa->grad_buffer();
    for (double& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const auto& d = a.impl()->data;
  double total = 0.0;
  for (double v : d) total += v;
  const double inv = 1.0 / static_cast<double>(d.size());
  TensorImpl* pa = a.impl().get();
  return make_result({1}, {total * inv}, "mean", {&a},
                     [pa, inv](const TensorImpl& o) {
                       auto& g = pa->grad_buffer();
                       for (double& v : g) v += o.grad[0] * inv;
                     });
}

// ---------------------------------------------------------------------------
// Indexing

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Tensor& first = parts.front();
  check_axis(first, axis, "concat");
  Shape out_dims = first.dims();
  out_dims[axis] = 0;
  for (const Tensor& p : parts) {
    bool ok = p.rank() == first.rank();
    for (std::size_t i = 0; ok && i < p.rank(); ++i) {
      if (i != axis && p.dims()[i] != first.dims()[i]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: shape " + shape_to_string(p.dims()) +
                           " incompatible with " +
                           shape_to_string(first.dims()) + " along axis " +
                           std::to_string(axis));
    }
    out_dims[axis] += p.dims()[axis];
  }
  const AxisView ov = axis_view(out_dims, axis);
  std::vector<double> out(product(out_dims));
  std::vector<std::size_t> chunk, offset;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t c = p.dims()[axis] * ov.inner;
    chunk.push_back(c);
    offset.push_back(off);
    off += c;
  }
  const std::size_t out_stride = ov.length * ov.inner;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& d = parts[k].impl()->data;
    for (std::size_t o = 0; o < ov.outer; ++o) {
      std::copy_n(d.data() + o * chunk[k], chunk[k],
                  out.data() + o * out_stride + offset[k]);
    }
  }
  std::vector<const Tensor*> inputs;
  std::vector<TensorImpl*> impls;
  for (const Tensor& p : parts) {
    inputs.push_back(&p);
    impls.push_back(p.impl().get());
  }
  return make_result(
      std::move(out_dims), std::move(out), "concat", inputs,
      [impls, chunk, offset, outer = ov.outer, out_stride](const TensorImpl& o) {
        for (std::size_t k = 0; k < impls.size(); ++k) {
          if (!impls[k]->requires_grad) continue;
          auto& g = impls[k]->grad_buffer();
          for (std::size_t oi = 0; oi < outer; ++oi)
            for (std::size_t j = 0; j < chunk[k]; ++j)
              g[oi * chunk[k] + j] += o.grad[oi * out_stride + offset[k] + j];
        }
      });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t length) {
  check_axis(a, axis, "slice");
  if (length == 0 || start + length > a.dims()[axis]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of bounds for " +
                         shape_to_string(a.dims()) + " axis " +
                         std::to_string(axis));
  }
  const AxisView v = axis_view(a.dims(), axis);
  Shape out_dims = a.dims();
  out_dims[axis] = length;
  const std::size_t in_stride = v.length * v.inner;
  const std::size_t chunk = length * v.inner;
  const std::size_t skip = start * v.inner;
  const auto& d = a.impl()->data;
  std::vector<double> out(v.outer * chunk);
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy_n(d.data() + o * in_stride + skip, chunk, out.data() + o * chunk);
  TensorImpl* pa = a.impl().get();
  return make_result(std::move(out_dims), std::move(out), "slice", {&a},
                     [pa, outer = v.outer, in_stride, chunk, skip](const TensorImpl& o) {
                       auto& g = pa->grad_buffer();
                       for (std::size_t oi = 0; oi < outer; ++oi)
                         for (std::size_t j = 0; j < chunk; ++j)
                           g[oi * in_stride + skip + j] += o.grad[oi * chunk + j];
                     });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank2(a, "gather_rows");
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t r = a.dim(0), c = a.dim(1);
  for (auto idx : rows) {
    if (idx >= r) {
      throw IndexError("gather_rows: row " + std::to_string(idx) +
                       " out of range for " + shape_to_string(a.dims()));
    }
  }
  const auto& d = a.impl()->data;
  std::vector<double> out(rows.size() * c);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(d.data() + rows[i] * c, c, out.data() + i * c);
  TensorImpl* pa = a.impl().get();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result({rows.size(), c}, std::move(out), "gather_rows", {&a},
                     [pa, idx = std::move(idx), c](const TensorImpl& o) {
                       auto& g = pa->grad_buffer();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           g[idx[i] * c + j] += o.grad[i * c + j];
                     });
}

Tensor pick(const Tensor& a, std::span<const std::size_t> cols) {
  require_rank2(a, "pick");
  const std::size_t r = a.dim(0), c = a.dim(1);
  if (cols.size() != r) {
    throw DimensionError("pick: " + std::to_string(cols.size()) +
                         " indices for " + shape_to_string(a.dims()));
  }
  for (auto col : cols) {
    if (col >= c) {
      throw IndexError("pick: column " + std::to_string(col) +
                       " out of range for " + shape_to_string(a.dims()));
    }
  }
  const auto& d = a.impl()->data;
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) out[i] = d[i * c + cols[i]];
  TensorImpl* pa = a.impl().get();
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  return make_result({r}, std::move(out), "pick", {&a},
                     [pa, idx = std::move(idx), c](const TensorImpl& o) {
                       auto& g = pa->grad_buffer();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         g[i * c + idx[i]] += o.grad[i];
                     });
}

}  // namespace rtdetr
