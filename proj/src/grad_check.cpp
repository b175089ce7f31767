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

#include "coattn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace coattn {

namespace {

template <typename T, typename F>
T evaluate(const F& f, std::span<Tensor<T>* const> tensors) {
  Tape<T> tape;
  std::vector<Var<T>> leaves;
  leaves.reserve(tensors.size());
  for (Tensor<T>* t : tensors) leaves.push_back(tape.view(*t));
  Var<T> out = f(tape, leaves);
  if (out.size() != 1) throw UsageError("grad_check: function must return a scalar");
  const T v = out.value()[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
  return v;
}

// Analytic gradients from one backward pass of f, then one central difference
// per probed entry from `numeric(input, entry)`.
template <typename Numeric>
GradCheckResult check(const ScalarFunction& f, std::span<const GradCheckInput> inputs, std::size_t max_entries,
                      std::uint64_t seed, const Numeric& numeric) {
  std::vector<bool> saved_flags;
  for (const GradCheckInput& in : inputs) {
    saved_flags.push_back(in.tensor->requires_grad());
    in.tensor->set_requires_grad(true);
    in.tensor->mutable_grad();
    in.tensor->zero_grad();
  }
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const GradCheckInput& in : inputs) leaves.push_back(tape.leaf(*in.tensor));
    Var<double> out = f(tape, leaves);
    if (out.size() != 1) throw UsageError("grad_check: function must return a scalar");
    if (!std::isfinite(out.value()[0])) throw NumericError("grad_check: function value is not finite");
    tape.backward(out);
  }

  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double>& t = *inputs[k].tensor;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::size_t> order(t.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (max_entries != 0 && order.size() > max_entries) {
      std::shuffle(order.begin(), order.end(), rng);
      order.resize(max_entries);
    }
    for (std::size_t idx : order) {
      const double n = numeric(k, idx);
      const double a = analytic[idx];
      const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
      ++result.entries_checked;
      if (result.worst_input.empty() || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_input = inputs[k].name;
        result.worst_index = idx;
        result.analytic = a;
        result.numeric = n;
      }
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i].tensor->set_requires_grad(saved_flags[i]);
  return result;
}

template <typename T, typename F>
double central_difference(const F& f, std::span<Tensor<T>* const> tensors, std::size_t k, std::size_t idx, T h) {
  Tensor<T>& t = *tensors[k];
  const T orig = t[idx];
  t[idx] = orig + h;
  const T up = evaluate<T>(f, tensors);
  t[idx] = orig - h;
  const T down = evaluate<T>(f, tensors);
  t[idx] = orig;
  return static_cast<double>((up - down) / (2 * h));
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& f, std::span<const GradCheckInput> inputs, double h,
                           std::size_t max_entries, std::uint64_t seed) {
  std::vector<Tensor<double>*> tensors;
  for (const GradCheckInput& in : inputs) tensors.push_back(in.tensor);
  return check(f, inputs, max_entries, seed, [&](std::size_t k, std::size_t idx) {
    return central_difference<double>(f, tensors, k, idx, h);
  });
}

GradCheckResult grad_check_extended(const ScalarFunction& f, const ExtendedScalarFunction& numeric_f,
                                    std::span<const GradCheckInput> inputs, double h, std::size_t max_entries,
                                    std::uint64_t seed) {
  std::vector<Tensor<long double>> copies;
  copies.reserve(inputs.size());
  for (const GradCheckInput& in : inputs) copies.push_back(in.tensor->cast<long double>());
  std::vector<Tensor<long double>*> tensors;
  for (auto& c : copies) tensors.push_back(&c);
  return check(f, inputs, max_entries, seed, [&](std::size_t k, std::size_t idx) {
    return central_difference<long double>(numeric_f, tensors, k, idx, static_cast<long double>(h));
  });
}

}  // namespace coattn
