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

#include <random>

#include <gtest/gtest.h>

#include "maskfed/cost.hpp"
#include "maskfed/errors.hpp"
#include "maskfed/ops.hpp"

namespace maskfed {
namespace {

CostInput vitb(double r_m) {
  CostInput in;
  in.r_m = r_m;
  return in;
}

ViTConfig vitb_model(std::int64_t m) {
  ViTConfig cfg;
  cfg.image_h = cfg.image_w = 224;
  cfg.channels = 3;
  cfg.patch = 16;
  cfg.dim = 768;
  cfg.heads = 12;
  cfg.depth = 12;
  cfg.local_depth = m;
  cfg.num_classes = 100;
  return cfg;
}

TEST(Closed, ForwardAtFullImage) {
  EXPECT_EQ(forward_cost_exact(vitb(0.0)), ExactUnits(7644413952LL));
  EXPECT_EQ(forward_cost_exact(vitb(0.0)),
            ExactUnits(5LL * 12 * 196 * 768 * 768 + 2LL * 12 * 196 * 196 * 768));
}

TEST(Closed, BackwardAtDefaults) {
  EXPECT_EQ(backward_cost_exact(vitb(0.75)), ExactUnits(592779264LL));
  CostInput none = vitb(0.75);
  none.n_global = none.n_t;
  EXPECT_EQ(backward_cost_exact(none), 0);
}

TEST(Closed, TotalAtDefaults) {
  EXPECT_EQ(total_cost_exact(vitb(0.75)), ExactUnits(2371117056LL));
  EXPECT_EQ(total_cost_exact(vitb(0.75)), ExactUnits(2312110080LL + 59006976LL));
  EXPECT_DOUBLE_EQ(total_cost(vitb(0.75)), 2371117056.0);
}

TEST(Closed, VanishesAsMaskingSaturates) {
  double prev = total_cost(vitb(0.0));
  for (double r : {0.9, 0.99, 0.999, 0.9999}) {
    const double t = total_cost(vitb(r));
    EXPECT_LT(t, prev);
    prev = t;
  }
  EXPECT_LT(forward_cost(vitb(0.9999)), 1e-3 * forward_cost(vitb(0.0)));
}

TEST(Closed, DoublingWidthQuadruplesLinearTerm) {
  CostInput a = vitb(0.0);
  a.n = 4;
  CostInput b = a;
  b.d *= 2;
  EXPECT_NEAR(forward_cost(b) / forward_cost(a), 4.0, 0.01);
}

TEST(Closed, IdentityOnRandomGrid) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    CostInput in;
    in.n_t = std::uniform_int_distribution<std::int64_t>(1, 24)(rng);
    in.n_global = std::uniform_int_distribution<std::int64_t>(0, in.n_t)(rng);
    in.n = std::uniform_int_distribution<std::int64_t>(1, 1024)(rng);
    in.d = std::uniform_int_distribution<std::int64_t>(1, 2048)(rng);
    in.r_m = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    ASSERT_EQ(forward_cost_exact(in) + backward_cost_exact(in), total_cost_exact(in));
  }
}

TEST(Closed, Monotonicity) {
  const double base = total_cost(vitb(0.5));
  auto with = [](auto mutate) {
    CostInput in = vitb(0.5);
    mutate(in);
    return total_cost(in);
  };
  EXPECT_LT(with([](CostInput& c) { c.r_m = 0.6; }), base);
  EXPECT_LT(with([](CostInput& c) { c.n_global = 11; }), base);
  EXPECT_GT(with([](CostInput& c) { c.n = 197; }), base);
  EXPECT_GT(with([](CostInput& c) { c.d = 769; }), base);
  EXPECT_GT(with([](CostInput& c) { c.n_t = 13; }), base);
}

TEST(Closed, RejectsInvalidInput) {
  CostInput in = vitb(1.0);
  EXPECT_THROW(total_cost(in), ConfigError);
  in = vitb(0.5);
  in.n_global = 13;
  EXPECT_THROW(total_cost(in), ConfigError);
}

TEST(Ratios, Table) {
  auto rows = cost_ratio_table(vitb(0.75), {0.0, 0.25, 0.5, 0.75, 0.95});
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_DOUBLE_EQ(rows[0].ratio, 1.0);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i].ratio, rows[i - 1].ratio);
  EXPECT_NEAR(rows[3].ratio, 0.2326, 1e-4);
}

TEST(Ratios, GflopConversion) {
  EXPECT_DOUBLE_EQ(to_gflops(1.5e9), 3.0);
  EXPECT_DOUBLE_EQ(to_gflops(1.5e9, 1.0), 1.5);
}

TEST(Measured, TraceMatchesExecutedForward) {
  ViTConfig cfg;
  cfg.dtype = DType::kFloat64;
  for (double r : {0.0, 0.5, 0.95}) {
    std::mt19937_64 rng(3);
    ParamSet p = init_params(cfg, rng);
    Tensor images = Tensor::zeros({1, 1, 16, 16}, cfg.dtype);
    std::vector<int> labels{0};
    Graph g;
    full_forward(g, p, images, labels, r, rng, cfg);
    EXPECT_EQ(measured_macs(cfg, r, CostPhase::kForward), g.mac_count()) << r;
  }
}

TEST(Measured, TraceMatchesExecutedTrainStep) {
  ViTConfig cfg;
  cfg.dtype = DType::kFloat64;
  std::mt19937_64 rng(3);
  ParamSet p = init_params(cfg, rng);
  set_trainable(p.w_global.named(), false);
  std::vector<int> labels{0};
  Graph g;
  auto logits = full_forward(g, p, Tensor::zeros({1, 1, 16, 16}, cfg.dtype), labels, 0.5, rng, cfg);
  g.backward(ops::cross_entropy(g, logits, labels));
  EXPECT_EQ(measured_macs(cfg, 0.5, CostPhase::kTrain), g.mac_count());
}

TEST(Measured, KeepCountDrivesSequenceTerms) {
  ViTConfig cfg = vitb_model(2);
  const auto full = measured_macs(cfg, 0.0, CostPhase::kForward);
  const auto masked = measured_macs(cfg, 0.75, CostPhase::kForward);
  EXPECT_LT(masked, full / 3);
  EXPECT_GT(masked, full / 5);
  EXPECT_GT(measured_macs(cfg, 0.75, CostPhase::kTrain), masked);
}

TEST(Comm, UnitArithmetic) {
  EXPECT_DOUBLE_EQ(comm_seconds(62'500'000, 0, 500.0), 1.0);
  EXPECT_DOUBLE_EQ(comm_seconds(31'250'000, 31'250'000, 500.0), 1.0);
  EXPECT_DOUBLE_EQ(comm_seconds(0, 0, 500.0), 0.0);
  EXPECT_THROW(comm_seconds(1, 1, 0.0), ConfigError);
  auto report = comm_report(62'500'000, 0, CostInput{}.bandwidth_mbps);
  EXPECT_DOUBLE_EQ(report.modeled_time_s, 1.0);
  EXPECT_EQ(report.bytes_up, 62'500'000u);
}

TEST(Params, LayerClosedForm) {
  for (std::int64_t d : {8, 64, 768}) {
    EXPECT_EQ(layer_param_count(d, 4), 12 * d * d + 13 * d);
    ViTConfig cfg = vitb_model(2);
    cfg.dim = d;
    cfg.heads = 4;
    std::mt19937_64 rng(1);
    auto block = init_block(cfg, rng);
    EXPECT_EQ(parameter_count(block.named("b")), layer_param_count(d, 4));
  }
}

TEST(Params, IncreasingInLocalDepth) {
  std::int64_t prev = 0;
  for (std::int64_t m = 1; m <= 11; ++m) {
    const auto total = trainable_param_count(vitb_model(m)).total;
    EXPECT_GT(total, prev);
    prev = total;
  }
}

TEST(Params, VitBBreakdown) {
  auto p = trainable_param_count(vitb_model(2));
  EXPECT_EQ(p.embeddings, 768 * 768 + 768 + 197 * 768 + 768);
  EXPECT_EQ(p.blocks, 2 * layer_param_count(768, 4));
  EXPECT_EQ(p.head, 768 * 100 + 100);
  EXPECT_EQ(p.total, 14995300);
  EXPECT_EQ(trainable_param_count(vitb_model(4)).total - p.total, 2 * (12 * 768 * 768 + 13 * 768));
}

}  // namespace
}  // namespace maskfed
