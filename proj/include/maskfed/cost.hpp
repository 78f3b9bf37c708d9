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

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maskfed/vit.hpp"

namespace maskfed {

using ExactUnits = boost::multiprecision::cpp_rational;

// How the kept token count enters the closed form.
enum class KeepRule {
  kContinuous,  // (1 - r_m) * n, the polynomial as written
  kClamped,     // max(1, floor((1 - r_m) * n)), matching the real model
};

struct CostInput {
  std::int64_t n_t = 12;       // N_T
  std::int64_t n_global = 10;  // N; the client trains M = N_T - N layers
  std::int64_t n = 196;        // patches per image
  std::int64_t d = 768;
  double r_m = 0.75;
  double mac_to_flop = 2.0;
  double bandwidth_mbps = 500.0;
  KeepRule keep = KeepRule::kContinuous;

  std::int64_t local_layers() const { return n_t - n_global; }
  void validate() const;
};

// Client training cost in MAC units, evaluated in exact rational arithmetic
// from the binary value of r_m.
//   forward  = 5 N_T s d^2 + 2 N_T s^2 d
//   backward = 10 M s d^2 + 4 M s^2 d
// where s is the kept token count (see KeepRule).
ExactUnits forward_cost_exact(const CostInput& in);
ExactUnits backward_cost_exact(const CostInput& in);
ExactUnits total_cost_exact(const CostInput& in);  // (15 N_T - 10 N) s d^2 + (6 N_T - 4 N) s^2 d

double forward_cost(const CostInput& in);
double backward_cost(const CostInput& in);
double total_cost(const CostInput& in);

double to_gflops(double macs, double mac_to_flop = 2.0);

struct CostRatioRow {
  double r_m = 0.0;
  double total = 0.0;
  double ratio = 0.0;  // total(r_m) / total(0)
};

std::vector<CostRatioRow> cost_ratio_table(const CostInput& base, const std::vector<double>& ratios);

enum class CostPhase { kForward, kTrain };

// Shape-traces one image through the model (no buffers) and returns the
// multiply-accumulates of every matmul. kTrain adds the client backward pass:
// phi and the head are trainable, the global module is frozen.
std::uint64_t measured_macs(const ViTConfig& cfg, double r_m, CostPhase phase);

// Shape-only parameters with the given geometry.
ParamSet shape_params(const ViTConfig& cfg);

// Seconds to move the bytes over the modeled link.
double comm_seconds(std::uint64_t bytes_up, std::uint64_t bytes_down, double bandwidth_mbps);

struct CostReport {
  double forward_units = 0.0;
  double backward_units = 0.0;
  double total_units = 0.0;
  std::optional<std::uint64_t> measured_macs;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  double modeled_time_s = 0.0;
};

CostReport comm_report(std::uint64_t bpf_bytes, std::uint64_t broadcast_bytes,
                       double bandwidth_mbps);

struct ParamBreakdown {
  std::int64_t embeddings = 0;  // patch projection, positions, class token
  std::int64_t blocks = 0;      // M transformer layers
  std::int64_t head = 0;
  std::int64_t total = 0;
};

// Exact count of phi + theta_local.
ParamBreakdown trainable_param_count(const ViTConfig& cfg);

// Parameters of one pre-norm transformer layer.
std::int64_t layer_param_count(std::int64_t d, std::int64_t mlp_ratio);

}  // namespace maskfed
