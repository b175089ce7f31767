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

#ifndef COATTN_GRAD_CHECK_HPP
#define COATTN_GRAD_CHECK_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coattn/autograd.hpp"

namespace coattn {

struct GradCheckInput {
  std::string name;
  Tensor<double>* tensor;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_input;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

// f records a scalar on the given tape, using one leaf per input in order.
using ScalarFunction = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

// Compares reverse-mode gradients against central differences with step h.
// Relative error is |a - n| / max(|a|, |n|, 1e-8). When max_entries is
// nonzero, at most that many entries per input are probed, chosen with a
// seeded shuffle; zero probes every entry.
GradCheckResult grad_check(const ScalarFunction& f, std::span<const GradCheckInput> inputs, double h = 1e-5,
                           std::size_t max_entries = 0, std::uint64_t seed = 0);

using ExtendedScalarFunction =
    std::function<Var<long double>(Tape<long double>&, std::span<const Var<long double>>)>;

// Same check, but the central differences are taken on long double copies
// of the inputs through `numeric_f`, which must compute the same function as
// `f`. Rounding in the differenced values then sits far below gradients that
// are tiny in double precision.
GradCheckResult grad_check_extended(const ScalarFunction& f, const ExtendedScalarFunction& numeric_f,
                                    std::span<const GradCheckInput> inputs, double h = 1e-5,
                                    std::size_t max_entries = 0, std::uint64_t seed = 0);

}  // namespace coattn

#endif  // COATTN_GRAD_CHECK_HPP
