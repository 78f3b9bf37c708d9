/*
 * Copyright 2026 The maskfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "maskfed/graph.hpp"
#include "maskfed/tensor.hpp"

namespace maskfed {

// A scalar function of f64 leaves whose autograd gradient is compared with
// central finite differences.
struct GradCase {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<Tensor> inputs;
  std::function<Tensor(Graph&)> loss;
};

struct GradCheckResult {
  std::string name;
  std::uint64_t seed = 0;
  double rel_error = 0.0;  // ||analytic - numeric|| / (||analytic|| + ||numeric||)
  bool passed = false;
};

GradCheckResult check_gradients(const GradCase& c, double step = 1e-5, double tol = 1e-4);

// Every differentiable op plus a transformer block and the end-to-end masked
// ViT loss, `repeats` random instances each.
std::vector<GradCase> gradient_cases(std::uint64_t seed, int repeats);

// Class counts the median rule yields, computed by enumerating every
// (class, sample, epoch) feature one by one.
std::map<int, std::int64_t> reference_balance_counts(const std::map<int, std::int64_t>& counts,
                                                     int epochs);

struct MedianCheck {
  std::map<int, std::int64_t> counts;
  int epochs = 1;
  bool passed = false;
  std::string detail;
};

// One random instance (<= 5 classes, counts <= 10, E <= 4) run through
// collect-style records and median_balance, compared with the reference.
MedianCheck check_median_instance(std::mt19937_64& rng);

struct SelftestReport {
  int checks = 0;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

SelftestReport run_selftest(std::ostream& log, const std::vector<GradCase>& extra_cases = {});

}  // namespace maskfed
