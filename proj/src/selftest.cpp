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

#include "maskfed/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "maskfed/bpf.hpp"
#include "maskfed/cost.hpp"
#include "maskfed/errors.hpp"
#include "maskfed/ops.hpp"
#include "maskfed/rng.hpp"
#include "maskfed/vit.hpp"

namespace maskfed {

namespace {

constexpr DType kF64 = DType::kFloat64;

Tensor random(Shape shape, std::mt19937_64& rng, bool grad = true, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = normal(rng);
  return Tensor::from(std::move(shape), std::move(v), kF64, grad);
}

// sum(out * r) with a fixed random r, turning any output into a scalar
// whose gradient exercises every output element differently.
Tensor project(Graph& g, const Tensor& out, const Tensor& r) {
  return ops::sum(g, ops::mul(g, out, r));
}

using Builder = std::function<GradCase(std::mt19937_64&)>;

GradCase unary(std::string name, Shape shape, std::mt19937_64& rng,
               std::function<Tensor(Graph&, const Tensor&)> op, Shape out_shape) {
  Tensor x = random(shape, rng);
  Tensor r = random(out_shape, rng, false);
  return {std::move(name), 0, {x}, [x, r, op](Graph& g) { return project(g, op(g, x), r); }};
}

std::vector<std::pair<std::string, Builder>> builders() {
  std::vector<std::pair<std::string, Builder>> b;
  b.emplace_back("matmul", [](std::mt19937_64& rng) {
    Tensor a = random({3, 4}, rng), w = random({4, 5}, rng), r = random({3, 5}, rng, false);
    return GradCase{"", 0, {a, w}, [=](Graph& g) { return project(g, ops::matmul(g, a, w), r); }};
  });
  b.emplace_back("matmul_shared_rhs", [](std::mt19937_64& rng) {
    Tensor a = random({2, 3, 4}, rng), w = random({4, 2}, rng), r = random({2, 3, 2}, rng, false);
    return GradCase{"", 0, {a, w}, [=](Graph& g) { return project(g, ops::matmul(g, a, w), r); }};
  });
  b.emplace_back("matmul_batched", [](std::mt19937_64& rng) {
    Tensor a = random({2, 2, 3, 4}, rng), w = random({2, 2, 4, 3}, rng);
    Tensor r = random({2, 2, 3, 3}, rng, false);
    return GradCase{"", 0, {a, w}, [=](Graph& g) { return project(g, ops::matmul(g, a, w), r); }};
  });
  b.emplace_back("add", [](std::mt19937_64& rng) {
    Tensor x = random({2, 3}, rng), y = random({2, 3}, rng), r = random({2, 3}, rng, false);
    return GradCase{"", 0, {x, y}, [=](Graph& g) { return project(g, ops::add(g, x, y), r); }};
  });
  b.emplace_back("mul", [](std::mt19937_64& rng) {
    Tensor x = random({2, 3}, rng), y = random({2, 3}, rng), r = random({2, 3}, rng, false);
    return GradCase{"", 0, {x, y}, [=](Graph& g) { return project(g, ops::mul(g, x, y), r); }};
  });
  b.emplace_back("scale", [](std::mt19937_64& rng) {
    return unary("", {3, 4}, rng, [](Graph& g, const Tensor& x) { return ops::scale(g, x, -1.7); },
                 {3, 4});
  });
  b.emplace_back("add_row", [](std::mt19937_64& rng) {
    Tensor x = random({2, 3, 4}, rng), v = random({4}, rng), r = random({2, 3, 4}, rng, false);
    return GradCase{"", 0, {x, v}, [=](Graph& g) { return project(g, ops::add_row(g, x, v), r); }};
  });
  b.emplace_back("gelu", [](std::mt19937_64& rng) {
    return unary("", {3, 5}, rng, [](Graph& g, const Tensor& x) { return ops::gelu(g, x); },
                 {3, 5});
  });
  b.emplace_back("softmax_rows", [](std::mt19937_64& rng) {
    return unary("", {2, 3, 5}, rng,
                 [](Graph& g, const Tensor& x) { return ops::softmax_rows(g, x); }, {2, 3, 5});
  });
  b.emplace_back("layer_norm", [](std::mt19937_64& rng) {
    Tensor x = random({2, 3, 6}, rng), gain = random({6}, rng), bias = random({6}, rng);
    Tensor r = random({2, 3, 6}, rng, false);
    return GradCase{"", 0, {x, gain, bias},
                    [=](Graph& g) { return project(g, ops::layer_norm(g, x, gain, bias), r); }};
  });
  b.emplace_back("reshape", [](std::mt19937_64& rng) {
    return unary("", {2, 6}, rng,
                 [](Graph& g, const Tensor& x) { return ops::reshape(g, x, {3, 4}); }, {3, 4});
  });
  b.emplace_back("permute", [](std::mt19937_64& rng) {
    return unary("", {2, 3, 4}, rng,
                 [](Graph& g, const Tensor& x) { return ops::permute(g, x, {2, 0, 1}); },
                 {4, 2, 3});
  });
  b.emplace_back("slice", [](std::mt19937_64& rng) {
    return unary("", {3, 6}, rng,
                 [](Graph& g, const Tensor& x) { return ops::slice(g, x, 1, 1, 4); }, {3, 3});
  });
  b.emplace_back("concat", [](std::mt19937_64& rng) {
    Tensor x = random({2, 3}, rng), y = random({2, 2}, rng), r = random({2, 5}, rng, false);
    return GradCase{"", 0, {x, y},
                    [=](Graph& g) { return project(g, ops::concat(g, {x, y}, 1), r); }};
  });
  b.emplace_back("expand_batch", [](std::mt19937_64& rng) {
    return unary("", {2, 4}, rng,
                 [](Graph& g, const Tensor& x) { return ops::expand_batch(g, x, 3); }, {3, 2, 4});
  });
  b.emplace_back("gather_rows", [](std::mt19937_64& rng) {
    Tensor table = random({5, 3}, rng), r = random({2, 3, 3}, rng, false);
    std::vector<std::int64_t> idx = {0, 2, 2, 4, 1, 0};
    return GradCase{"", 0, {table}, [=](Graph& g) {
                      return project(g, ops::gather_rows(g, table, idx, {2, 3}), r);
                    }};
  });
  b.emplace_back("cross_entropy", [](std::mt19937_64& rng) {
    Tensor logits = random({4, 5}, rng, true, 2.0);
    std::uniform_int_distribution<int> label(0, 4);
    std::vector<int> labels(4);
    for (auto& l : labels) l = label(rng);
    return GradCase{"", 0, {logits},
                    [=](Graph& g) { return ops::cross_entropy(g, logits, labels); }};
  });
  b.emplace_back("sum", [](std::mt19937_64& rng) {
    Tensor x = random({3, 4}, rng);
    return GradCase{"", 0, {x}, [=](Graph& g) { return ops::sum(g, ops::mul(g, x, x)); }};
  });
  b.emplace_back("transformer_block", [](std::mt19937_64& rng) {
    ViTConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.mlp_ratio = 2;
    cfg.dtype = kF64;
    BlockParams p = init_block(cfg, rng);
    auto named = p.named("block");
    for (auto& [name, t] : named) {
      auto v = t.mutable_data();
      std::normal_distribution<double> normal(0.0, 0.4);
      for (auto& x : v) x += normal(rng);
    }
    Tensor x = random({2, 3, 8}, rng);
    Tensor r = random({2, 3, 8}, rng, false);
    std::vector<Tensor> inputs = tensors_of(named);
    inputs.push_back(x);
    return GradCase{"", 0, inputs,
                    [=](Graph& g) { return project(g, block_forward(g, p, x, 2), r); }};
  });
  b.emplace_back("masked_vit_loss", [](std::mt19937_64& rng) {
    ViTConfig cfg;
    cfg.image_h = 8;
    cfg.image_w = 8;
    cfg.channels = 2;
    cfg.patch = 4;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.depth = 3;
    cfg.local_depth = 1;
    cfg.mlp_ratio = 2;
    cfg.num_classes = 3;
    cfg.dtype = kF64;
    ParamSet params = init_params(cfg, rng);
    auto named = params.phi.named();
    for (const auto& list : {params.w_global.named(), params.theta.named()}) {
      named.insert(named.end(), list.begin(), list.end());
    }
    std::normal_distribution<double> normal(0.0, 0.3);
    for (auto& [name, t] : named) {
      for (auto& x : t.mutable_data()) x += normal(rng);
    }
    Tensor images = random({2, 2, 8, 8}, rng, false);
    std::vector<int> labels = {0, 2};
    MaskedBatch batch = make_masked_batch(images, labels, 0.5, rng, cfg);
    return GradCase{"", 0, tensors_of(named), [=](Graph& g) {
                      Tensor h = local_forward(g, params.phi, batch, cfg);
                      Tensor logits =
                          head_forward(g, params.theta, global_forward(g, params.w_global, h, cfg));
                      return ops::cross_entropy(g, logits, labels);
                    }};
  });
  return b;
}

double evaluate(const GradCase& c) {
  Graph g;
  return c.loss(g).item();
}

}  // namespace

GradCheckResult check_gradients(const GradCase& c, double step, double tol) {
  GradCheckResult out{c.name, c.seed, 0.0, false};
  for (const auto& t : c.inputs) {
    if (t.dtype() != kF64) throw NumericError("gradcheck: inputs must be 64-bit");
  }
  {
    Graph g;
    Tensor loss = c.loss(g);
    g.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& t : c.inputs) {
    analytic.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                       : std::vector<double>(static_cast<std::size_t>(t.numel())));
  }
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    Tensor t = c.inputs[i];
    auto values = t.mutable_data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double orig = values[j];
      values[j] = orig + step;
      const double plus = evaluate(c);
      values[j] = orig - step;
      const double minus = evaluate(c);
      values[j] = orig;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[i][j];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  const double denom = std::sqrt(a2) + std::sqrt(n2);
  out.rel_error = denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
  out.passed = out.rel_error < tol;
  return out;
}

std::vector<GradCase> gradient_cases(std::uint64_t seed, int repeats) {
  std::vector<GradCase> cases;
  const auto all = builders();
  for (std::size_t op = 0; op < all.size(); ++op) {
    for (int r = 0; r < repeats; ++r) {
      const auto case_seed = derive_seed(seed, StreamPurpose::kInit, op, static_cast<std::uint64_t>(r));
      std::mt19937_64 rng(case_seed);
      GradCase c = all[op].second(rng);
      c.name = all[op].first;
      c.seed = case_seed;
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

std::map<int, std::int64_t> reference_balance_counts(const std::map<int, std::int64_t>& counts,
                                                     int epochs) {
  std::vector<std::int64_t> present;
  for (auto [cls, n] : counts) {
    if (n > 0) present.push_back(n);
  }
  std::map<int, std::int64_t> out;
  if (present.empty()) return out;
  std::sort(present.begin(), present.end());
  const auto median = present[(present.size() - 1) / 2];
  for (auto [cls, n] : counts) {
    if (n == 0) continue;
    std::int64_t retained = 0;
    for (std::int64_t sample = 0; sample < n; ++sample) {
      for (int epoch = 0; epoch < epochs; ++epoch) {
        const bool below_median = n < median;
        if (below_median || epoch == epochs - 1) ++retained;
      }
    }
    out[cls] = std::min(retained, median);
  }
  return out;
}

MedianCheck check_median_instance(std::mt19937_64& rng) {
  MedianCheck check;
  std::uniform_int_distribution<int> classes_d(1, 5), count_d(0, 10), epochs_d(1, 4);
  const int classes = classes_d(rng);
  check.epochs = epochs_d(rng);
  std::int64_t total = 0;
  for (int c = 0; c < classes; ++c) {
    check.counts[c] = count_d(rng);
    total += check.counts[c];
  }
  if (total == 0) check.counts[0] = 1;

  std::vector<PatchFeatureRecord> pool;
  for (int e = 0; e < check.epochs; ++e) {
    for (auto [cls, n] : check.counts) {
      for (std::int64_t s = 0; s < n; ++s) {
        pool.push_back({0, cls, e, {}, Tensor::zeros({1, 1})});
      }
    }
  }
  const auto median = class_median(check.counts);
  auto set = median_balance(0, pool, check.counts, median, rng);
  const auto expected = reference_balance_counts(check.counts, check.epochs);

  std::map<int, std::int64_t> produced;
  for (const auto& r : set.records) {
    ++produced[r.label];
    const bool in_pool = std::any_of(pool.begin(), pool.end(), [&](const PatchFeatureRecord& p) {
      return p.features.impl() == r.features.impl();
    });
    if (!in_pool) check.detail = "record not from the pool";
  }
  if (produced != set.per_class_count) check.detail = "per_class_count disagrees with records";
  if (set.per_class_count != expected) {
    std::ostringstream ss;
    ss << "counts differ from reference (E=" << check.epochs << ")";
    check.detail = ss.str();
  }
  check.passed = check.detail.empty();
  return check;
}

SelftestReport run_selftest(std::ostream& log, const std::vector<GradCase>& extra_cases) {
  SelftestReport report;
  auto fail = [&](const std::string& msg) {
    report.failures.push_back(msg);
    log << "FAIL " << msg << "\n";
  };

  constexpr std::uint64_t kSeed = 20260415;
  auto cases = gradient_cases(kSeed, 6);
  cases.insert(cases.end(), extra_cases.begin(), extra_cases.end());
  double worst = 0.0;
  for (const auto& c : cases) {
    ++report.checks;
    auto r = check_gradients(c);
    worst = std::max(worst, r.rel_error);
    if (!r.passed) {
      std::ostringstream ss;
      ss << "gradient " << r.name << " seed=" << r.seed << " rel_error=" << r.rel_error;
      fail(ss.str());
    }
  }
  log << "gradient checks: " << cases.size() << " cases, worst relative error " << worst << "\n";

  std::mt19937_64 median_rng(kSeed);
  for (int i = 0; i < 1000; ++i) {
    ++report.checks;
    auto m = check_median_instance(median_rng);
    if (!m.passed) fail("median instance " + std::to_string(i) + ": " + m.detail);
  }
  log << "median sampler: 1000 instances checked against the reference\n";

  std::mt19937_64 cost_rng(kSeed + 1);
  for (int i = 0; i < 1000; ++i) {
    ++report.checks;
    CostInput in;
    in.n_t = std::uniform_int_distribution<std::int64_t>(1, 24)(cost_rng);
    in.n_global = std::uniform_int_distribution<std::int64_t>(0, in.n_t)(cost_rng);
    in.n = std::uniform_int_distribution<std::int64_t>(1, 1024)(cost_rng);
    in.d = std::uniform_int_distribution<std::int64_t>(1, 2048)(cost_rng);
    in.r_m = std::uniform_real_distribution<double>(0.0, 1.0)(cost_rng);
    if (forward_cost_exact(in) + backward_cost_exact(in) != total_cost_exact(in)) {
      std::ostringstream ss;
      ss << "cost identity N_T=" << in.n_t << " N=" << in.n_global << " n=" << in.n
         << " d=" << in.d << " r_m=" << in.r_m;
      fail(ss.str());
    }
  }
  CostInput vitb;
  vitb.r_m = 0.0;
  ++report.checks;
  if (forward_cost_exact(vitb) != ExactUnits(7644413952LL)) fail("forward cost at ViT-B, r_m=0");
  vitb.r_m = 0.75;
  ++report.checks;
  if (total_cost_exact(vitb) != ExactUnits(2371117056LL)) fail("total cost at ViT-B, r_m=0.75");
  ++report.checks;
  if (backward_cost_exact(vitb) != ExactUnits(592779264LL)) fail("backward cost at ViT-B, r_m=0.75");
  log << "cost identities: 1000 random inputs plus fixed values\n";

  log << (report.ok() ? "selftest passed" : "selftest FAILED") << " (" << report.checks
      << " checks, " << report.failures.size() << " failures)\n";
  return report;
}

}  // namespace maskfed
