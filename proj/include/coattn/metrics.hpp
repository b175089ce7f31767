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

#ifndef COATTN_METRICS_HPP
#define COATTN_METRICS_HPP

#include <cstddef>
#include <span>

namespace coattn {

// Quadratic weighted kappa between two integer rating lists on the closed
// range [min_rating, max_rating]. Returns 1 when the expected disagreement
// is zero, i.e. both sides use a single identical rating.
double qwk(std::span<const int> gold, std::span<const int> predicted, int min_rating, int max_rating);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t dof = 0;
  // All differences zero: reported as t = 0, p = 1.
  bool no_difference = false;
  // Constant nonzero differences: zero variance, reported as p = 0 with t
  // set to +-infinity.
  bool diverged = false;
};

// Two-sided paired t-test on a - b.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace coattn

#endif  // COATTN_METRICS_HPP
