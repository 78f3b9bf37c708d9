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

#include "maskfed/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "maskfed/errors.hpp"

namespace maskfed {

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto values = p.mutable_data();
    auto grad = p.grad();
    const bool has = p.has_grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double gj = has ? grad[j] : 0.0;
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      double x = values[j];
      x -= lr * options_.weight_decay * x;
      x -= lr * mhat / (std::sqrt(vhat) + options_.eps);
      values[j] = x;
    }
    round_to(p.dtype(), values);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.clear_grad();
}

double cosine_warmup_lr(std::int64_t step, std::int64_t total, std::int64_t warmup, double peak) {
  if (total < 1) throw ConfigError("lr schedule: total steps must be >= 1");
  if (warmup < 0 || warmup > total) {
    throw ConfigError("lr schedule: warmup " + std::to_string(warmup) + " exceeds total " +
                      std::to_string(total));
  }
  if (step <= warmup && warmup > 0) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total == warmup) return peak;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  const double clamped = std::clamp(progress, 0.0, 1.0);
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * clamped));
}

}  // namespace maskfed
