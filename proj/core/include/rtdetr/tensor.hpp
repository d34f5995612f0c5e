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

#ifndef RTDETR_TENSOR_HPP_
#define RTDETR_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rtdetr {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& dims);

class Tensor;

namespace detail {

struct TensorImpl;

// Back-propagation record attached to a non-leaf tensor. `backward` reads the
// gradient of the tensor that owns the node and accumulates into parents.
struct Node {
  std::string_view op;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape dims;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::unique_ptr<Node> node;

  // Zero-initialized gradient buffer, allocated on first use.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

// Dense row-major tensor of doubles with an optional reverse-mode autograd
// record.
//
// Tensor is a handle: copies share storage and graph position, the same way
// a framework tensor object does. Use clone() for an independent copy. Graph
// construction and backward() on one graph must happen on a single thread;
// distinct graphs are independent.
class Tensor {
 public:
  // Rank-0 is not used; the default tensor is a single zero of shape {1}.
  Tensor();
  explicit Tensor(Shape dims, double fill = 0.0);
  Tensor(Shape dims, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  const Shape& dims() const;
  std::size_t rank() const { return dims().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  // Writes through to the shared storage. Only valid on tensors that are not
  // part of a live graph (leaves or detached values).
  std::span<double> mutable_data();

  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);

  bool has_grad() const;
  // Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  void zero_grad();

  bool has_node() const;
  std::string_view op() const;
  std::vector<Tensor> parents() const;

  // Independent copy of values; no graph, requires_grad false.
  Tensor detach() const;
  // Independent copy of values preserving requires_grad, no graph.
  Tensor clone() const;

  // Reverse-mode sweep from this single-element tensor. Gradients accumulate
  // into every reachable tensor with requires_grad; callers zero parameter
  // gradients between steps. The graph is released afterwards.
  void backward() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  // Internal: used by operation implementations.
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl);
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Broadcasting is limited to scalar (size-1)
// operands and, for add/sub, a rank-1 bias row against the last axis of a
// matrix.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);  // rank 2 only
Tensor reshape(const Tensor& a, Shape dims);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // same shape only
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);

// Layer normalization over the last axis with affine gain and bias of
// length dims().back().
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t length);
// Rows of a rank-2 tensor, in the given order (repeats allowed).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
// out[i] = a[i, cols[i]] for a rank-2 tensor.
Tensor pick(const Tensor& a, std::span<const std::size_t> cols);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace rtdetr

#endif  // RTDETR_TENSOR_HPP_
