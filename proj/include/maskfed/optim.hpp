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
#include <vector>

#include "maskfed/tensor.hpp"

namespace maskfed {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// AdamW with decoupled weight decay. Moments live as long as the optimizer,
// so a client's optimizer carries its state across rounds.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWOptions options = {});

  // Applies one update with learning rate `lr`; parameters without a
  // gradient are treated as having a zero gradient.
  void step(double lr);
  void zero_grad();

  std::int64_t steps() const { return t_; }
  const std::vector<Tensor>& params() const { return params_; }
  const AdamWOptions& options() const { return options_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWOptions options_;
  std::int64_t t_ = 0;
};

// Linear warmup over steps [1, warmup] to `peak`, then half-cosine decay to
// zero at `total`. Throws ConfigError when warmup > total or total < 1.
double cosine_warmup_lr(std::int64_t step, std::int64_t total, std::int64_t warmup, double peak);

}  // namespace maskfed
