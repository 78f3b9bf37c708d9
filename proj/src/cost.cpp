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

#include "maskfed/cost.hpp"

#include <cmath>
#include <numeric>

#include "maskfed/errors.hpp"
#include "maskfed/graph.hpp"
#include "maskfed/ops.hpp"

namespace maskfed {

namespace {

ExactUnits kept_tokens(const CostInput& in) {
  if (in.keep == KeepRule::kClamped) return ExactUnits(keep_count(in.n, in.r_m));
  return (ExactUnits(1) - ExactUnits(in.r_m)) * in.n;
}

struct Terms {
  ExactUnits lin;   // s d^2
  ExactUnits quad;  // s^2 d
};

Terms terms(const CostInput& in) {
  in.validate();
  const ExactUnits s = kept_tokens(in);
  const ExactUnits d(in.d);
  return {s * d * d, s * s * d};
}

double to_double(const ExactUnits& v) { return v.convert_to<double>(); }

BlockParams shape_block(const ViTConfig& cfg) {
  const auto d = cfg.dim;
  const auto hidden = cfg.mlp_ratio * d;
  auto t = [&](Shape s) { return Tensor::shape_only(std::move(s), cfg.dtype); };
  return {t({d}),         t({d}),      t({d, 3 * d}), t({3 * d}), t({d, d}),      t({d}),
          t({d}),         t({d}),      t({d, hidden}), t({hidden}), t({hidden, d}), t({d})};
}

}  // namespace

void CostInput::validate() const {
  if (n_t < 1) throw ConfigError("cost: N_T must be >= 1");
  if (n_global < 0 || n_global > n_t) throw ConfigError("cost: N must lie in [0, N_T]");
  if (n < 1 || d < 1) throw ConfigError("cost: n and d must be >= 1");
  if (!(r_m >= 0.0 && r_m < 1.0)) throw ConfigError("cost: r_m must lie in [0, 1)");
  if (!(bandwidth_mbps > 0.0)) throw ConfigError("cost.bandwidth_mbps: must be positive");
}

ExactUnits forward_cost_exact(const CostInput& in) {
  auto [lin, quad] = terms(in);
  return 5 * in.n_t * lin + 2 * in.n_t * quad;
}

ExactUnits backward_cost_exact(const CostInput& in) {
  auto [lin, quad] = terms(in);
  const auto m = in.local_layers();
  return 10 * m * lin + 4 * m * quad;
}

ExactUnits total_cost_exact(const CostInput& in) {
  auto [lin, quad] = terms(in);
  return (15 * in.n_t - 10 * in.n_global) * lin + (6 * in.n_t - 4 * in.n_global) * quad;
}

double forward_cost(const CostInput& in) { return to_double(forward_cost_exact(in)); }
double backward_cost(const CostInput& in) { return to_double(backward_cost_exact(in)); }
double total_cost(const CostInput& in) { return to_double(total_cost_exact(in)); }

double to_gflops(double macs, double mac_to_flop) { return macs * mac_to_flop / 1e9; }

std::vector<CostRatioRow> cost_ratio_table(const CostInput& base, const std::vector<double>& ratios) {
  CostInput zero = base;
  zero.r_m = 0.0;
  const ExactUnits denom = total_cost_exact(zero);
  std::vector<CostRatioRow> rows;
  for (double r : ratios) {
    CostInput in = base;
    in.r_m = r;
    const ExactUnits total = total_cost_exact(in);
    rows.push_back({r, to_double(total), to_double(total / denom)});
  }
  return rows;
}

ParamSet shape_params(const ViTConfig& cfg) {
  cfg.validate();
  const auto d = cfg.dim;
  ParamSet p;
  p.phi.patch_weight = Tensor::shape_only({cfg.patch_dim(), d}, cfg.dtype);
  p.phi.patch_bias = Tensor::shape_only({d}, cfg.dtype);
  p.phi.pos_embedding = Tensor::shape_only({cfg.num_patches() + 1, d}, cfg.dtype);
  p.phi.class_token = Tensor::shape_only({d}, cfg.dtype);
  for (std::int64_t i = 0; i < cfg.local_depth; ++i) p.phi.blocks.push_back(shape_block(cfg));
  for (std::int64_t i = cfg.local_depth; i < cfg.depth; ++i) {
    p.w_global.blocks.push_back(shape_block(cfg));
  }
  p.w_global.first_layer = cfg.local_depth;
  p.w_global.norm_gain = Tensor::shape_only({d}, cfg.dtype);
  p.w_global.norm_bias = Tensor::shape_only({d}, cfg.dtype);
  p.theta.weight = Tensor::shape_only({d, cfg.num_classes}, cfg.dtype);
  p.theta.bias = Tensor::shape_only({cfg.num_classes}, cfg.dtype);
  return p;
}

std::uint64_t measured_macs(const ViTConfig& cfg, double r_m, CostPhase phase) {
  ParamSet p = shape_params(cfg);
  const bool train = phase == CostPhase::kTrain;
  set_trainable(p.phi.named(), train);
  set_trainable(p.theta.named(), train);

  MaskedBatch batch;
  batch.kept = keep_count(cfg.num_patches(), r_m);
  batch.mask_ratio = r_m;
  batch.patches = Tensor::shape_only({1, batch.kept, cfg.patch_dim()}, cfg.dtype);
  batch.kept_indices.resize(static_cast<std::size_t>(batch.kept));
  std::iota(batch.kept_indices.begin(), batch.kept_indices.end(), 0);
  batch.labels = {0};

  Graph g(Graph::Mode::kTrace);
  Tensor features = local_forward(g, p.phi, batch, cfg);
  Tensor logits = head_forward(g, p.theta, global_forward(g, p.w_global, features, cfg));
  if (train) g.backward(ops::cross_entropy(g, logits, batch.labels));
  return g.mac_count();
}

double comm_seconds(std::uint64_t bytes_up, std::uint64_t bytes_down, double bandwidth_mbps) {
  if (!(bandwidth_mbps > 0.0)) throw ConfigError("cost.bandwidth_mbps: must be positive");
  return static_cast<double>(bytes_up + bytes_down) * 8.0 / (bandwidth_mbps * 1e6);
}

CostReport comm_report(std::uint64_t bpf_bytes, std::uint64_t broadcast_bytes,
                       double bandwidth_mbps) {
  CostReport r;
  r.bytes_up = bpf_bytes;
  r.bytes_down = broadcast_bytes;
  r.modeled_time_s = comm_seconds(bpf_bytes, broadcast_bytes, bandwidth_mbps);
  return r;
}

std::int64_t layer_param_count(std::int64_t d, std::int64_t mlp_ratio) {
  const auto hidden = mlp_ratio * d;
  return 4 * d                     // two norms
         + 3 * d * d + 3 * d       // qkv
         + d * d + d               // projection
         + d * hidden + hidden     // fc1
         + hidden * d + d;         // fc2
}

ParamBreakdown trainable_param_count(const ViTConfig& cfg) {
  const ParamSet p = shape_params(cfg);
  ParamBreakdown out;
  for (const auto& [name, t] : p.phi.named()) {
    (name.rfind("blocks.", 0) == 0 ? out.blocks : out.embeddings) += t.numel();
  }
  out.head = parameter_count(p.theta.named());
  out.total = out.embeddings + out.blocks + out.head;
  return out;
}

}  // namespace maskfed
