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

#include "coattn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace coattn {

namespace {

template <typename T>
void require_same_tape(const Var<T>& a, const Var<T>& b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw UsageError("operands were recorded on different tapes");
  }
}

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace

// ---------------------------------------------------------------- Tape

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T>& param) {
  Node node;
  node.external = &param;
  if (param.requires_grad()) {
    node.sink = &param;
    node.needs_grad = true;
  }
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::view(const Tensor<T>& value) {
  Node node;
  node.external = &value;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw UsageError("op input recorded after its consumer");
    node.needs_grad = node.needs_grad || nodes_[in].needs_grad;
  }
  node.inputs = std::move(inputs);
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

template <typename T>
std::span<const T> Tape<T>::grad(std::size_t id) const {
  return nodes_[id].adjoint;
}

template <typename T>
std::span<T> Tape<T>::mutable_grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.adjoint.empty()) n.adjoint.assign(value(id).size(), T{0});
  return n.adjoint;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (&loss.tape() != this) throw UsageError("backward: loss was recorded on another tape");
  if (loss.size() != 1) {
    throw UsageError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  for (Node& n : nodes_) n.adjoint.clear();
  if (!nodes_[loss.id()].needs_grad) return;
  mutable_grad(loss.id())[0] = T{1};
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.adjoint.empty()) continue;
    if (n.backward) {
      n.backward(*this, i);
    } else if (n.sink != nullptr) {
      auto dst = n.sink->mutable_grad();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.adjoint[k];
    }
  }
}

// ---------------------------------------------------------------- ops

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(av.shape()) + " by " +
                         shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      if (aip == T{0}) continue;
      const T* brow = &bv[p * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape<T>& tape, std::size_t self) {
    auto dc = tape.grad(self);
    const Tensor<T>& A = tape.value(ia);
    const Tensor<T>& B = tape.value(ib);
    if (tape.needs_grad(ia)) {
      auto da = tape.mutable_grad(ia);  // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          T acc{0};
          for (std::size_t j = 0; j < n; ++j) acc += dc[i * n + j] * B[p * n + j];
          da[i * k + p] += acc;
        }
      }
    }
    if (tape.needs_grad(ib)) {
      auto db = tape.mutable_grad(ib);  // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = A[i * k + p];
          if (aip == T{0}) continue;
          for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * dc[i * n + j];
        }
      }
    }
  });
}

template <typename T>
Var<T> elementwise(Elementwise kind, Var<T> a, const Var<T>* b, T scalar) {
  const bool binary = kind == Elementwise::kAdd || kind == Elementwise::kSub || kind == Elementwise::kMul;
  if (binary) {
    if (b == nullptr) throw UsageError("elementwise: binary kind needs a second operand");
    require_same_tape(a, *b);
    require_same_shape("elementwise", a, *b);
  }
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  const std::size_t n = av.size();
  const std::size_t ia = a.id();
  const std::size_t ib = binary ? b->id() : 0;
  switch (kind) {
    case Elementwise::kAdd:
    case Elementwise::kSub: {
      const Tensor<T>& bv = b->value();
      const T sign = kind == Elementwise::kAdd ? T{1} : T{-1};
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + sign * bv[i];
      return a.tape().record(std::move(out), {ia, ib}, [ia, ib, sign, n](Tape<T>& tape, std::size_t self) {
        auto g = tape.grad(self);
        if (tape.needs_grad(ia)) {
          auto da = tape.mutable_grad(ia);
          for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
        }
        if (tape.needs_grad(ib)) {
          auto db = tape.mutable_grad(ib);
          for (std::size_t i = 0; i < n; ++i) db[i] += sign * g[i];
        }
      });
    }
    case Elementwise::kMul: {
      const Tensor<T>& bv = b->value();
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
      return a.tape().record(std::move(out), {ia, ib}, [ia, ib, n](Tape<T>& tape, std::size_t self) {
        auto g = tape.grad(self);
        const Tensor<T>& A = tape.value(ia);
        const Tensor<T>& B = tape.value(ib);
        if (tape.needs_grad(ia)) {
          auto da = tape.mutable_grad(ia);
          for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * B[i];
        }
        if (tape.needs_grad(ib)) {
          auto db = tape.mutable_grad(ib);
          for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * A[i];
        }
      });
    }
    case Elementwise::kScale: {
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * scalar;
      return a.tape().record(std::move(out), {ia}, [ia, scalar, n](Tape<T>& tape, std::size_t self) {
        auto g = tape.grad(self);
        auto da = tape.mutable_grad(ia);
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * scalar;
      });
    }
    case Elementwise::kTanh:
    case Elementwise::kSigmoid:
    case Elementwise::kRelu: {
      for (std::size_t i = 0; i < n; ++i) {
        if (kind == Elementwise::kTanh) {
          out[i] = std::tanh(av[i]);
        } else if (kind == Elementwise::kSigmoid) {
          out[i] = stable_sigmoid(av[i]);
        } else {
          out[i] = av[i] > T{0} ? av[i] : T{0};
        }
      }
      // Derivatives are expressed through the output, which the node keeps.
      return a.tape().record(std::move(out), {ia}, [ia, kind, n](Tape<T>& tape, std::size_t self) {
        auto g = tape.grad(self);
        const Tensor<T>& y = tape.value(self);
        auto da = tape.mutable_grad(ia);
        for (std::size_t i = 0; i < n; ++i) {
          T d;
          if (kind == Elementwise::kTanh) {
            d = T{1} - y[i] * y[i];
          } else if (kind == Elementwise::kSigmoid) {
            d = y[i] * (T{1} - y[i]);
          } else {
            d = y[i] > T{0} ? T{1} : T{0};
          }
          da[i] += g[i] * d;
        }
      });
    }
  }
  throw UsageError("elementwise: unknown kind " + std::to_string(static_cast<int>(kind)));
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return elementwise(Elementwise::kAdd, a, &b);
}
template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return elementwise(Elementwise::kSub, a, &b);
}
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return elementwise(Elementwise::kMul, a, &b);
}
template <typename T>
Var<T> scale(Var<T> a, T factor) {
  return elementwise<T>(Elementwise::kScale, a, nullptr, factor);
}
template <typename T>
Var<T> tanh(Var<T> a) {
  return elementwise<T>(Elementwise::kTanh, a);
}
template <typename T>
Var<T> sigmoid(Var<T> a) {
  return elementwise<T>(Elementwise::kSigmoid, a);
}
template <typename T>
Var<T> relu(Var<T> a) {
  return elementwise<T>(Elementwise::kRelu, a);
}

template <typename T>
Var<T> add_bias(Var<T> a, Var<T> bias) {
  require_same_tape(a, bias);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = bias.value();
  const std::size_t n = bv.size();
  if (bv.rank() != 1 || av.shape().back() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " does not match last axis of " +
                         shape_string(av.shape()));
  }
  Tensor<T> out = av;
  out.set_requires_grad(false);
  const std::size_t rows = av.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bv[j];
  }
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib, rows, n](Tape<T>& tape, std::size_t self) {
    auto g = tape.grad(self);
    if (tape.needs_grad(ia)) {
      auto da = tape.mutable_grad(ia);
      for (std::size_t i = 0; i < rows * n; ++i) da[i] += g[i];
    }
    if (tape.needs_grad(ib)) {
      auto db = tape.mutable_grad(ib);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) db[j] += g[r * n + j];
      }
    }
  });
}

template <typename T>
Var<T> softmax_masked(Var<T> logits, std::span<const std::uint8_t> mask) {
  const Tensor<T>& x = logits.value();
  if (mask.size() != x.size()) {
    throw DimensionError("softmax_masked: mask has " + std::to_string(mask.size()) +
                         " entries for logits " + shape_string(x.shape()));
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  Tensor<T> out(x.shape());
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    T hi = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (keep[base + j]) hi = std::max(hi, x[base + j]);
    }
    if (hi == -std::numeric_limits<T>::infinity()) {
      throw DegenerateInputError("softmax_masked: row " + std::to_string(r) + " has no unmasked entry");
    }
    T total{0};
    for (std::size_t j = 0; j < n; ++j) {
      if (keep[base + j]) {
        out[base + j] = std::exp(x[base + j] - hi);
        total += out[base + j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) out[base + j] /= total;
  }
  const std::size_t ia = logits.id();
  return logits.tape().record(std::move(out), {ia}, [ia, rows, n, keep = std::move(keep)](Tape<T>& tape, std::size_t self) {
    auto g = tape.grad(self);
    const Tensor<T>& y = tape.value(self);
    auto dx = tape.mutable_grad(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * n;
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += g[base + j] * y[base + j];
      for (std::size_t j = 0; j < n; ++j) {
        if (keep[base + j]) dx[base + j] += y[base + j] * (g[base + j] - dot);
      }
    }
  });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("concat: no tensors given");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " + shape_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var<T>& p : parts) {
    require_same_tape(parts[0], p);
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_string(s) + " incompatible with " + shape_string(first) +
                           " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  Tensor<T> out(out_shape);
  const std::size_t out_stride = out_shape[axis] * inner;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;  // per part: elements per outer index
  std::size_t offset = 0;
  for (const Var<T>& p : parts) {
    const Tensor<T>& v = p.value();
    const std::size_t w = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(&v[o * w], w, &out[o * out_stride + offset]);
    }
    ids.push_back(p.id());
    widths.push_back(w);
    offset += w;
  }
  return parts[0].tape().record(std::move(out), ids, [ids, widths, outer, out_stride](Tape<T>& tape, std::size_t self) {
    auto g = tape.grad(self);
    std::size_t off = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::size_t w = widths[p];
      if (tape.needs_grad(ids[p])) {
        auto d = tape.mutable_grad(ids[p]);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < w; ++i) d[o * w + i] += g[o * out_stride + off + i];
        }
      }
      off += w;
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(a.value().data().begin(), a.value().data().end()));
  const std::size_t ia = a.id();
  const std::size_t n = a.size();
  return a.tape().record(std::move(out), {ia}, [ia, n](Tape<T>& tape, std::size_t self) {
    auto g = tape.grad(self);
    auto d = tape.mutable_grad(ia);
    for (std::size_t i = 0; i < n; ++i) d[i] += g[i];
  });
}

template <typename T>
Var<T> row(Var<T> a, std::size_t t) {
  const Tensor<T>& av = a.value();
  if (av.rank() != 2 || t >= av.dim(0)) {
    throw DimensionError("row: index " + std::to_string(t) + " invalid for " + shape_string(av.shape()));
  }
  const std::size_t n = av.dim(1);
  Tensor<T> out({1, n});
  std::copy_n(&av[t * n], n, &out[0]);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, t, n](Tape<T>& tape, std::size_t self) {
    auto g = tape.grad(self);
    auto d = tape.mutable_grad(ia);
    for (std::size_t j = 0; j < n; ++j) d[t * n + j] += g[j];
  });
}

template <typename T>
Var<T> tile_rows(Var<T> a, std::size_t times) {
  const Tensor<T>& av = a.value();
  if (av.rank() != 2 || av.dim(0) != 1 || times == 0) {
    throw DimensionError("tile_rows: expected a 1 x n matrix, got " + shape_string(av.shape()));
  }
  const std::size_t n = av.dim(1);
  Tensor<T> out({times, n});
  for (std::size_t r = 0; r < times; ++r) std::copy_n(&av[0], n, &out[r * n]);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, times, n](Tape<T>& tape, std::size_t self) {
    auto g = tape.grad(self);
    auto d = tape.mutable_grad(ia);
    for (std::size_t r = 0; r < times; ++r) {
      for (std::size_t j = 0; j < n; ++j) d[j] += g[r * n + j];
    }
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T total{0};
  for (T v : a.value().data()) total += v;
  Tensor<T> out({1}, total);
  const std::size_t ia = a.id();
  const std::size_t n = a.size();
  return a.tape().record(std::move(out), {ia}, [ia, n](Tape<T>& tape, std::size_t self) {
    const T g = tape.grad(self)[0];
    auto d = tape.mutable_grad(ia);
    for (std::size_t i = 0; i < n; ++i) d[i] += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T{1} / static_cast<T>(a.size()));
}

template <typename T>
Var<T> masked_fill(Var<T> a, std::span<const std::uint8_t> mask, T fill) {
  if (mask.size() != a.size()) {
    throw DimensionError("masked_fill: mask has " + std::to_string(mask.size()) + " entries for " +
                         shape_string(a.shape()));
  }
  Tensor<T> out = a.value();
  out.set_requires_grad(false);
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!keep[i]) out[i] = fill;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, keep = std::move(keep)](Tape<T>& tape, std::size_t self) {
    auto g = tape.grad(self);
    auto d = tape.mutable_grad(ia);
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (keep[i]) d[i] += g[i];
    }
  });
}

template <typename T>
Var<T> max_last_axis(Var<T> a, std::span<const std::uint8_t> mask) {
  const Tensor<T>& av = a.value();
  if (mask.size() != av.size()) {
    throw DimensionError("max_last_axis: mask has " + std::to_string(mask.size()) + " entries for " +
                         shape_string(av.shape()));
  }
  const std::size_t n = av.shape().back();
  const std::size_t rows = av.size() / n;
  Shape out_shape(av.shape().begin(), av.shape().end() - 1);
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor<T> out(out_shape);
  std::vector<std::size_t> argmax(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    bool found = false;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t i = r * n + j;
      if (mask[i] && (!found || av[i] > out[r])) {
        out[r] = av[i];
        argmax[r] = i;
        found = true;
      }
    }
    if (!found) throw DegenerateInputError("max_last_axis: row " + std::to_string(r) + " is fully masked");
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, argmax = std::move(argmax)](Tape<T>& tape, std::size_t self) {
    auto g = tape.grad(self);
    auto d = tape.mutable_grad(ia);
    for (std::size_t r = 0; r < argmax.size(); ++r) d[argmax[r]] += g[r];
  });
}

template <typename T>
Var<T> embedding_lookup(Var<T> table, std::span<const std::int32_t> ids, Shape grid) {
  const Tensor<T>& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("embedding_lookup: table must be rank 2, got " + shape_string(tv.shape()));
  if (shape_size(grid) != ids.size()) {
    throw DimensionError("embedding_lookup: " + std::to_string(ids.size()) + " ids for grid " + shape_string(grid));
  }
  const std::size_t vocab = tv.dim(0), d = tv.dim(1);
  Shape out_shape = grid;
  out_shape.push_back(d);
  Tensor<T> out(out_shape);
  std::vector<std::int32_t> copy(ids.begin(), ids.end());
  for (std::size_t i = 0; i < copy.size(); ++i) {
    const std::int32_t id = copy[i];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw EncodingError("embedding_lookup: id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(vocab));
    }
    if (id == 0) continue;
    std::copy_n(&tv[static_cast<std::size_t>(id) * d], d, &out[i * d]);
  }
  const std::size_t it = table.id();
  return table.tape().record(std::move(out), {it}, [it, d, copy = std::move(copy)](Tape<T>& tape, std::size_t self) {
    auto g = tape.grad(self);
    auto dt = tape.mutable_grad(it);
    for (std::size_t i = 0; i < copy.size(); ++i) {
      if (copy[i] == 0) continue;
      const std::size_t base = static_cast<std::size_t>(copy[i]) * d;
      for (std::size_t j = 0; j < d; ++j) dt[base + j] += g[i * d + j];
    }
  });
}

template <typename T>
Var<T> unfold_windows(Var<T> x, std::size_t kernel) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3 || kernel == 0 || xv.dim(1) < kernel) {
    throw DimensionError("unfold_windows: kernel " + std::to_string(kernel) + " does not fit " +
                         shape_string(xv.shape()));
  }
  const std::size_t s = xv.dim(0), w = xv.dim(1), d = xv.dim(2);
  const std::size_t p = w - kernel + 1;
  const std::size_t width = kernel * d;
  Tensor<T> out({s, p, width});
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t q = 0; q < p; ++q) {
      // Tokens q..q+k-1 are contiguous in row-major order.
      std::copy_n(&xv[(i * w + q) * d], width, &out[(i * p + q) * width]);
    }
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, s, w, d, p, width](Tape<T>& tape, std::size_t self) {
    auto g = tape.grad(self);
    auto dx = tape.mutable_grad(ix);
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t q = 0; q < p; ++q) {
        const T* src = &g[(i * p + q) * width];
        T* dst = &dx[(i * w + q) * d];
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Var<T> weighted_pool(Var<T> values, Var<T> weights) {
  require_same_tape(values, weights);
  const Tensor<T>& cv = values.value();
  const Tensor<T>& wv = weights.value();
  if (cv.rank() != 3 || wv.rank() != 2 || wv.dim(0) != cv.dim(0) || wv.dim(1) != cv.dim(1)) {
    throw DimensionError("weighted_pool: weights " + shape_string(wv.shape()) + " do not match values " +
                         shape_string(cv.shape()));
  }
  const std::size_t s = cv.dim(0), p = cv.dim(1), d = cv.dim(2);
  Tensor<T> out({s, d});
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t q = 0; q < p; ++q) {
      const T v = wv[i * p + q];
      if (v == T{0}) continue;
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += v * cv[(i * p + q) * d + j];
    }
  }
  const std::size_t ic = values.id(), iw = weights.id();
  return values.tape().record(std::move(out), {ic, iw}, [ic, iw, s, p, d](Tape<T>& tape, std::size_t self) {
    auto g = tape.grad(self);
    const Tensor<T>& C = tape.value(ic);
    const Tensor<T>& W = tape.value(iw);
    if (tape.needs_grad(ic)) {
      auto dc = tape.mutable_grad(ic);
      for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t q = 0; q < p; ++q) {
          const T v = W[i * p + q];
          for (std::size_t j = 0; j < d; ++j) dc[(i * p + q) * d + j] += v * g[i * d + j];
        }
      }
    }
    if (tape.needs_grad(iw)) {
      auto dw = tape.mutable_grad(iw);
      for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t q = 0; q < p; ++q) {
          T acc{0};
          for (std::size_t j = 0; j < d; ++j) acc += C[(i * p + q) * d + j] * g[i * d + j];
          dw[i * p + q] += acc;
        }
      }
    }
  });
}

template <typename T>
Var<T> trilinear_similarity(Var<T> he, Var<T> ha, Var<T> w, Var<T> b) {
  require_same_tape(he, ha);
  require_same_tape(he, w);
  require_same_tape(he, b);
  const Tensor<T>& E = he.value();
  const Tensor<T>& A = ha.value();
  const Tensor<T>& W = w.value();
  if (E.rank() != 2 || A.rank() != 2 || E.dim(1) != A.dim(1) || W.size() != 3 * E.dim(1) || b.size() != 1) {
    throw DimensionError("trilinear_similarity: essay " + shape_string(E.shape()) + ", article " +
                         shape_string(A.shape()) + ", weight " + shape_string(W.shape()) + ", bias " +
                         shape_string(b.shape()));
  }
  const std::size_t se = E.dim(0), sa = A.dim(0), d = E.dim(1);
  const T bias = b.value()[0];
  Tensor<T> out({se, sa});
  std::vector<T> essay_term(se, T{0});
  std::vector<T> article_term(sa, T{0});
  for (std::size_t t = 0; t < se; ++t) {
    for (std::size_t k = 0; k < d; ++k) essay_term[t] += W[k] * E[t * d + k];
  }
  for (std::size_t j = 0; j < sa; ++j) {
    for (std::size_t k = 0; k < d; ++k) article_term[j] += W[d + k] * A[j * d + k];
  }
  for (std::size_t t = 0; t < se; ++t) {
    for (std::size_t j = 0; j < sa; ++j) {
      T cross{0};
      for (std::size_t k = 0; k < d; ++k) cross += W[2 * d + k] * E[t * d + k] * A[j * d + k];
      out[t * sa + j] = essay_term[t] + article_term[j] + cross + bias;
    }
  }
  const std::size_t ie = he.id(), ia = ha.id(), iw = w.id(), ib = b.id();
  return he.tape().record(std::move(out), {ie, ia, iw, ib}, [ie, ia, iw, ib, se, sa, d](Tape<T>& tape, std::size_t self) {
    auto g = tape.grad(self);
    const Tensor<T>& E = tape.value(ie);
    const Tensor<T>& A = tape.value(ia);
    const Tensor<T>& W = tape.value(iw);
    std::vector<T> row_sum(se, T{0}), col_sum(sa, T{0});
    for (std::size_t t = 0; t < se; ++t) {
      for (std::size_t j = 0; j < sa; ++j) {
        row_sum[t] += g[t * sa + j];
        col_sum[j] += g[t * sa + j];
      }
    }
    if (tape.needs_grad(ie)) {
      auto de = tape.mutable_grad(ie);
      for (std::size_t t = 0; t < se; ++t) {
        for (std::size_t k = 0; k < d; ++k) {
          T acc = row_sum[t] * W[k];
          for (std::size_t j = 0; j < sa; ++j) acc += g[t * sa + j] * W[2 * d + k] * A[j * d + k];
          de[t * d + k] += acc;
        }
      }
    }
    if (tape.needs_grad(ia)) {
      auto da = tape.mutable_grad(ia);
      for (std::size_t j = 0; j < sa; ++j) {
        for (std::size_t k = 0; k < d; ++k) {
          T acc = col_sum[j] * W[d + k];
          for (std::size_t t = 0; t < se; ++t) acc += g[t * sa + j] * W[2 * d + k] * E[t * d + k];
          da[j * d + k] += acc;
        }
      }
    }
    if (tape.needs_grad(iw)) {
      auto dw = tape.mutable_grad(iw);
      for (std::size_t k = 0; k < d; ++k) {
        T e_acc{0}, a_acc{0}, x_acc{0};
        for (std::size_t t = 0; t < se; ++t) e_acc += row_sum[t] * E[t * d + k];
        for (std::size_t j = 0; j < sa; ++j) a_acc += col_sum[j] * A[j * d + k];
        for (std::size_t t = 0; t < se; ++t) {
          for (std::size_t j = 0; j < sa; ++j) x_acc += g[t * sa + j] * E[t * d + k] * A[j * d + k];
        }
        dw[k] += e_acc;
        dw[d + k] += a_acc;
        dw[2 * d + k] += x_acc;
      }
    }
    if (tape.needs_grad(ib)) {
      T total{0};
      for (std::size_t t = 0; t < se; ++t) total += row_sum[t];
      tape.mutable_grad(ib)[0] += total;
    }
  });
}

#define COATTN_INSTANTIATE(T)                                                                  \
  template class Tape<T>;                                                                      \
  template Var<T> matmul(Var<T>, Var<T>);                                                      \
  template Var<T> elementwise(Elementwise, Var<T>, const Var<T>*, T);                          \
  template Var<T> add(Var<T>, Var<T>);                                                         \
  template Var<T> sub(Var<T>, Var<T>);                                                         \
  template Var<T> mul(Var<T>, Var<T>);                                                         \
  template Var<T> scale(Var<T>, T);                                                            \
  template Var<T> tanh(Var<T>);                                                                \
  template Var<T> sigmoid(Var<T>);                                                             \
  template Var<T> relu(Var<T>);                                                                \
  template Var<T> add_bias(Var<T>, Var<T>);                                                    \
  template Var<T> softmax_masked(Var<T>, std::span<const std::uint8_t>);                       \
  template Var<T> concat(std::span<const Var<T>>, std::size_t);                               \
  template Var<T> reshape(Var<T>, Shape);                                                      \
  template Var<T> row(Var<T>, std::size_t);                                                    \
  template Var<T> tile_rows(Var<T>, std::size_t);                                              \
  template Var<T> sum(Var<T>);                                                                 \
  template Var<T> mean(Var<T>);                                                                \
  template Var<T> masked_fill(Var<T>, std::span<const std::uint8_t>, T);                       \
  template Var<T> max_last_axis(Var<T>, std::span<const std::uint8_t>);                        \
  template Var<T> embedding_lookup(Var<T>, std::span<const std::int32_t>, Shape);              \
  template Var<T> unfold_windows(Var<T>, std::size_t);                                         \
  template Var<T> weighted_pool(Var<T>, Var<T>);                                               \
  template Var<T> trilinear_similarity(Var<T>, Var<T>, Var<T>, Var<T>);

COATTN_INSTANTIATE(float)
COATTN_INSTANTIATE(double)
COATTN_INSTANTIATE(long double)

#undef COATTN_INSTANTIATE

}  // namespace coattn
