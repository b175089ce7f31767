// Copyright 2026 The coattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COATTN_AUTOGRAD_HPP
#define COATTN_AUTOGRAD_HPP

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "coattn/tensor.hpp"

namespace coattn {

template <typename T>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// tape that produced it is alive.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  std::span<const T> grad() const { return tape_->grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Linear record of operations. Node i only ever reads nodes < i, so
// replaying the backward closures in reverse index order is a valid
// topological sweep. Adjoints accumulate by summation, so a value used by
// several ops receives the sum of its per-use gradients.
template <typename T>
class Tape {
 public:
  // Called with the tape and the id of the node being differentiated; reads
  // that node's adjoint and adds into its inputs' adjoints.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // The parameter must outlive the tape. When it requires grad, backward()
  // adds this node's adjoint into param.mutable_grad().
  Var<T> leaf(Tensor<T>& param);
  // Read-only reference to an external tensor; never receives gradient.
  Var<T> view(const Tensor<T>& value);
  Var<T> constant(Tensor<T> value);
  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward);

  void backward(Var<T> loss);

  const Tensor<T>& value(std::size_t id) const;
  std::span<const T> grad(std::size_t id) const;
  std::span<T> mutable_grad(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T>* sink = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    std::vector<T> adjoint;
  };

  std::deque<Node> nodes_;  // stable references across push_back
};

enum class Elementwise { kAdd, kSub, kMul, kTanh, kSigmoid, kRelu, kScale };

// Row-major matrix product of two rank-2 values.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

// Generic entry point; binary kinds need identical shapes, kScale needs the
// scalar argument, unary kinds ignore both extras.
template <typename T>
Var<T> elementwise(Elementwise kind, Var<T> a, const Var<T>* b = nullptr, T scalar = T{1});

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> tanh(Var<T> a);
template <typename T>
Var<T> sigmoid(Var<T> a);
template <typename T>
Var<T> relu(Var<T> a);

// a[..., n] + bias[n] on every leading index. The one sanctioned broadcast
// besides scalars; it is spelled out so it never happens by accident.
template <typename T>
Var<T> add_bias(Var<T> a, Var<T> bias);

// Softmax over the last axis restricted to positions where mask is nonzero.
// Masked outputs are exactly 0. mask has one entry per element of logits.
template <typename T>
Var<T> softmax_masked(Var<T> logits, std::span<const std::uint8_t> mask);

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);

template <typename T>
Var<T> reshape(Var<T> a, Shape shape);

// Row t of a rank-2 value as a 1 x n matrix.
template <typename T>
Var<T> row(Var<T> a, std::size_t t);

// Repeats a 1 x n matrix into times x n.
template <typename T>
Var<T> tile_rows(Var<T> a, std::size_t times);

// Sum of all elements as a [1] tensor.
template <typename T>
Var<T> sum(Var<T> a);

template <typename T>
Var<T> mean(Var<T> a);

// Replaces positions where mask is zero by `fill`; no gradient flows there.
template <typename T>
Var<T> masked_fill(Var<T> a, std::span<const std::uint8_t> mask, T fill);

// Max over the last axis among positions where mask is nonzero. The result
// drops the last axis; gradient goes to the first arg-max.
template <typename T>
Var<T> max_last_axis(Var<T> a, std::span<const std::uint8_t> mask);

// Gathers rows of table [V x d] for ids laid out with `grid` shape, giving
// grid + [d]. Id 0 is padding and yields a zero row with no gradient.
template <typename T>
Var<T> embedding_lookup(Var<T> table, std::span<const std::int32_t> ids, Shape grid);

// [S x W x d] -> [S x (W-k+1) x k*d]; window p of sentence s is the
// concatenation of token vectors p..p+k-1.
template <typename T>
Var<T> unfold_windows(Var<T> x, std::size_t kernel);

// out[s, :] = sum_p weights[s, p] * values[s, p, :]
template <typename T>
Var<T> weighted_pool(Var<T> values, Var<T> weights);

// sim[t, j] = w[0:d].he_t + w[d:2d].ha_j + w[2d:3d].(he_t * ha_j) + b
template <typename T>
Var<T> trilinear_similarity(Var<T> he, Var<T> ha, Var<T> w, Var<T> b);

}  // namespace coattn

#endif  // COATTN_AUTOGRAD_HPP
