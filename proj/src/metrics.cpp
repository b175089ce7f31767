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

#include "coattn/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "coattn/errors.hpp"

namespace coattn {

double qwk(std::span<const int> gold, std::span<const int> predicted, int min_rating, int max_rating) {
  if (gold.empty()) throw ValidationError("qwk: no rating pairs");
  if (gold.size() != predicted.size()) throw ValidationError("qwk: gold and predicted lengths differ");
  if (max_rating < min_rating) throw ValidationError("qwk: inverted rating range");
  const auto r = static_cast<std::size_t>(max_rating - min_rating + 1);
  std::vector<std::int64_t> observed(r * r, 0);
  std::vector<std::int64_t> hist_gold(r, 0), hist_pred(r, 0);
  for (std::size_t n = 0; n < gold.size(); ++n) {
    if (gold[n] < min_rating || gold[n] > max_rating || predicted[n] < min_rating || predicted[n] > max_rating) {
      throw ValidationError("qwk: rating pair (" + std::to_string(gold[n]) + ", " + std::to_string(predicted[n]) +
                            ") outside [" + std::to_string(min_rating) + ", " + std::to_string(max_rating) + "]");
    }
    const auto i = static_cast<std::size_t>(gold[n] - min_rating);
    const auto j = static_cast<std::size_t>(predicted[n] - min_rating);
    ++observed[i * r + j];
    ++hist_gold[i];
    ++hist_pred[j];
  }
  // With O = counts / N and E = hist_gold hist_pred^T / N^2, the common
  // (R - 1)^2 weight denominator and one factor of N cancel, leaving
  //   kappa = 1 - N * sum(w O_counts) / sum(w hist_gold hist_pred)
  // in exact integers.
  const auto total = static_cast<std::int64_t>(gold.size());
  std::int64_t observed_cost = 0;
  std::int64_t expected_cost = 0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      const auto diff = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(j);
      observed_cost += diff * diff * observed[i * r + j];
      expected_cost += diff * diff * hist_gold[i] * hist_pred[j];
    }
  }
  if (expected_cost == 0) return 1.0;
  return 1.0 - static_cast<double>(total * observed_cost) / static_cast<double>(expected_cost);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("paired_t_test: samples have different lengths");
  if (a.size() < 2) throw ValidationError("paired_t_test: need at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    mean += d[i];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  bool all_zero = true;
  for (double x : d) {
    ss += (x - mean) * (x - mean);
    all_zero = all_zero && x == 0.0;
  }
  TTestResult result;
  result.dof = n - 1;
  if (all_zero) {
    result.no_difference = true;
    return result;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    result.diverged = true;
    result.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    result.p = 0.0;
    return result;
  }
  result.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(result.dof));
  result.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(result.t)));
  return result;
}

}  // namespace coattn
