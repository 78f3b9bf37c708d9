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

// Acceptance gate. Prints one PASS/FAIL line per criterion plus "info" lines
// with the numbers behind it. Exit status is the number of failed criteria.
//
//   acceptance [--criterion N]... [--threads T] [--config PATH] [--report DIR]
//
// With --report, each criterion's lines also go to DIR/criterion_N.txt.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "maskfed/config.hpp"
#include "maskfed/cost.hpp"
#include "maskfed/experiment.hpp"
#include "maskfed/fl.hpp"
#include "maskfed/parallel.hpp"
#include "maskfed/selftest.hpp"

namespace maskfed {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string toy_config_path = "configs/toy.json";
int lanes = 1;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string transcript;

void emit(const std::string& line) {
  std::printf("%s\n", line.c_str());
  std::fflush(stdout);
  transcript += line + "\n";
}

void info(const std::string& line) { emit("  info: " + line); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ViTConfig vitb(std::int64_t m) {
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

Outcome cost_ratios() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> ratios = {0.25, 0.5, 0.75, 0.95};
  const std::vector<double> target = {0.7425, 0.4924, 0.2497, 0.0570};
  const auto rows = cost_ratio_table(CostInput{}, ratios);
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double rel = rows[i].ratio / target[i] - 1.0;
    ok = ok && std::abs(rel) <= 0.25;
    detail += fmt("r=%.2f %.4f (%+.1f%%) ", ratios[i], rows[i].ratio, 100 * rel);
  }
  const double t = seconds_since(t0);
  return {ok && t < 1.0, detail + fmt("in %.3f s", t)};
}

Outcome cost_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  int identity_failures = 0;
  for (int i = 0; i < 1000; ++i) {
    CostInput in;
    in.n_t = std::uniform_int_distribution<std::int64_t>(1, 24)(rng);
    in.n_global = std::uniform_int_distribution<std::int64_t>(0, in.n_t)(rng);
    in.n = std::uniform_int_distribution<std::int64_t>(1, 1024)(rng);
    in.d = std::uniform_int_distribution<std::int64_t>(1, 2048)(rng);
    in.r_m = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    identity_failures += forward_cost_exact(in) + backward_cost_exact(in) != total_cost_exact(in);
  }

  // Grid of model shapes with n >= 64 and d >= 64.
  struct Shape {
    std::int64_t image, patch, dim, heads, depth, m;
  };
  const std::vector<Shape> shapes = {
      {128, 16, 64, 4, 6, 2},   {224, 16, 768, 12, 12, 2}, {224, 16, 768, 12, 12, 4},
      {256, 16, 128, 4, 8, 1},  {224, 16, 384, 6, 12, 6},  {160, 16, 256, 8, 6, 3},
      {224, 14, 512, 8, 8, 2},  {256, 16, 64, 4, 4, 3},
  };
  int checked = 0, outside = 0;
  double worst = 0.0;
  for (const auto& s : shapes) {
    ViTConfig cfg = vitb(s.m);
    cfg.image_h = cfg.image_w = s.image;
    cfg.patch = s.patch;
    cfg.dim = s.dim;
    cfg.heads = s.heads;
    cfg.depth = s.depth;
    CostInput in;
    in.n_t = s.depth;
    in.n_global = s.depth - s.m;
    in.n = cfg.num_patches();
    in.d = s.dim;
    const double measured0 = static_cast<double>(measured_macs(cfg, 0.0, CostPhase::kTrain));
    for (double r : {0.25, 0.5, 0.75, 0.95}) {
      in.r_m = r;
      CostInput zero = in;
      zero.r_m = 0.0;
      const double closed = total_cost(in) / total_cost(zero);
      const double measured = measured_macs(cfg, r, CostPhase::kTrain) / measured0;
      const double rel = measured / closed - 1.0;
      ++checked;
      if (std::abs(rel) > 0.10) {
        ++outside;
        info(fmt("outside: n=%lld d=%lld N_T=%lld M=%lld r=%.2f measured %.4f closed %.4f (%+.1f%%)",
                 static_cast<long long>(in.n), static_cast<long long>(in.d),
                 static_cast<long long>(s.depth), static_cast<long long>(s.m), r, measured,
                 closed, 100 * rel));
      }
      worst = std::max(worst, std::abs(rel));
    }
  }
  const double t = seconds_since(t0);
  return {identity_failures == 0 && outside == 0 && t < 10.0,
          fmt("identity failures %d/1000, ratio deviations > 10%%: %d/%d (worst %.1f%%), in %.2f s",
              identity_failures, outside, checked, 100 * worst, t)};
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = gradient_cases(12345, 6);
  int failed = 0;
  double worst = 0.0;
  std::set<std::string> kinds;
  for (const auto& c : cases) {
    const auto r = check_gradients(c);
    kinds.insert(c.name);
    worst = std::max(worst, r.rel_error);
    if (!r.passed) {
      ++failed;
      info(fmt("%s seed %llu rel %.3e", r.name.c_str(), static_cast<unsigned long long>(r.seed),
               r.rel_error));
    }
  }
  const double t = seconds_since(t0);
  return {failed == 0 && cases.size() >= 100 && t < 60.0,
          fmt("%zu cases over %zu kinds, %d failed, worst rel %.2e, in %.1f s", cases.size(),
              kinds.size(), failed, worst, t)};
}

Outcome median_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(99);
  int failed = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto check = check_median_instance(rng);
    if (!check.passed) {
      if (failed == 0) info(check.detail);
      ++failed;
    }
  }
  const double t = seconds_since(t0);
  return {failed == 0 && t < 5.0, fmt("%d/1000 instances disagree, in %.2f s", failed, t)};
}

ExperimentConfig toy(std::uint64_t seed, double r_m) {
  ExperimentConfig cfg = parse_config(toy_config_path);
  cfg.fl.seed = seed;
  cfg.fl.mask_ratio = r_m;
  return cfg;
}

Outcome protocol() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = toy(1, 0.5);
  cfg.fl.rounds = 10;
  auto [train, test] = build_datasets(cfg);

  int frozen_bad = 0, broadcast_bad = 0, fresh_bad = 0, updates = 0;
  auto stream = [&](int threads, bool audit) {
    EftvitSimulation sim(cfg.vit(), cfg.fl, train, test, threads);
    std::string out;
    for (int r = 0; r < cfg.fl.rounds; ++r) {
      const auto server_before = checksum(sim.server().w_global.named());
      const auto m = sim.run_round(r);
      out += m.to_json() + "\n";
      if (!audit) continue;
      const auto& trace = sim.last_trace();
      std::set<int> skipped(m.skipped.begin(), m.skipped.end());
      broadcast_bad += trace.server_before != server_before;
      for (std::size_t i = 0; i < m.selected.size(); ++i) {
        broadcast_bad += trace.broadcast[i] != server_before;
        broadcast_bad += checksum(sim.clients()[m.selected[i]].w_snapshot.named()) != server_before;
        if (skipped.count(m.selected[i])) continue;
        ++updates;
        frozen_bad += trace.update_before[i] != trace.update_after[i];
      }
      std::set<int> sources;
      for (const auto& rec : sim.server().bpf) sources.insert(rec.client_id);
      std::set<int> uploaded;
      for (int k : m.selected) {
        if (!skipped.count(k)) uploaded.insert(k);
      }
      fresh_bad += sources != uploaded;
      fresh_bad += std::set<int>(trace.bpf_clients.begin(), trace.bpf_clients.end()) != sources;
    }
    return out;
  };
  const auto reference = stream(1, true);
  const bool rerun_same = stream(1, false) == reference;
  const int many = std::max(2, lanes);
  const bool threads_same = stream(many, false) == reference;
  const double t = seconds_since(t0);
  info(fmt("%d client updates audited; thread-pool sizes 1 and %d", updates, many));
  return {frozen_bad == 0 && broadcast_bad == 0 && fresh_bad == 0 && rerun_same && threads_same &&
              updates > 0 && t < 300.0,
          fmt("frozen violations %d, broadcast violations %d, stale BPF rounds %d, rerun %s, "
              "threads %s, in %.0f s",
              frozen_bad, broadcast_bad, fresh_bad, rerun_same ? "identical" : "DIFFERENT",
              threads_same ? "identical" : "DIFFERENT", t)};
}

struct ToyRun {
  double final_acc = 0.0;
  double best_acc = 0.0;
  double personalized = 0.0;
};

std::map<std::pair<std::uint64_t, double>, ToyRun> toy_cache;

ToyRun toy_run(std::uint64_t seed, double r_m) {
  const auto key = std::make_pair(seed, r_m);
  if (auto it = toy_cache.find(key); it != toy_cache.end()) return it->second;
  RunOptions opts;
  opts.threads = lanes;
  const auto result = run_experiment(toy(seed, r_m), opts);
  ToyRun run;
  run.final_acc = result.final_eval.test_acc;
  run.personalized = result.final_eval.personalized_acc;
  for (const auto& m : result.rounds) {
    if (m.test_acc) run.best_acc = std::max(run.best_acc, *m.test_acc);
  }
  info(fmt("seed %llu r_m %.2f: final test acc %.4f (best %.4f), personalized %.4f",
           static_cast<unsigned long long>(seed), r_m, run.final_acc, run.best_acc,
           run.personalized));
  return toy_cache[key] = run;
}

const std::vector<std::uint64_t> kSeeds = {1, 2, 3};

Outcome toy_convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  int reached = 0;
  std::string accs;
  for (auto seed : kSeeds) {
    // Share of the four test classes each client has seen, averaged over
    // clients: the ceiling for heads trained on local labels only.
    const auto cfg = toy(seed, 0.5);
    auto [train, test] = build_datasets(cfg);
    const auto clients = make_client_datasets(
        dirichlet_partition(train.labels, cfg.fl.num_clients, cfg.fl.beta, cfg.fl.seed),
        train.labels);
    double coverage = 0.0;
    for (const auto& cd : clients) {
      coverage += cd.distinct_classes() / static_cast<double>(cfg.dataset.classes) / clients.size();
    }
    info(fmt("seed %llu: mean class coverage per client %.3f",
             static_cast<unsigned long long>(seed), coverage));
    const auto run = toy_run(seed, 0.5);
    reached += run.final_acc >= 0.9;
    accs += fmt("%.3f ", run.final_acc);
  }
  const double t = seconds_since(t0);
  return {reached >= 2 && t < 600.0,
          fmt("final test acc %s-> %d/3 seeds >= 0.90, in %.0f s", accs.c_str(), reached, t)};
}

Outcome masking_robustness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::map<double, double> mean;
  for (double r : {0.0, 0.5, 0.95}) {
    for (auto seed : kSeeds) mean[r] += toy_run(seed, r).final_acc / kSeeds.size();
  }
  const double t = seconds_since(t0);
  const bool near = std::abs(mean[0.5] - mean[0.0]) <= 0.05;
  const bool drop = mean[0.95] <= mean[0.5] - 0.05;
  return {near && drop && t < 1800.0,
          fmt("mean acc r=0 %.3f, r=0.5 %.3f, r=0.95 %.3f; |0.5-0| %.3f, 0.5-0.95 %.3f, in %.0f s",
              mean[0.0], mean[0.5], mean[0.95], std::abs(mean[0.5] - mean[0.0]),
              mean[0.5] - mean[0.95], t)};
}

Outcome param_count() {
  const auto m2 = trainable_param_count(vitb(2));
  const auto m4 = trainable_param_count(vitb(4));
  const double rel = static_cast<double>(m2.total) / 14.23e6 - 1.0;
  const auto delta = m4.total - m2.total;
  const bool delta_ok = delta == 2 * layer_param_count(768, 4);
  info(fmt("M=2 breakdown: embeddings %lld, blocks %lld, head %lld", static_cast<long long>(m2.embeddings),
           static_cast<long long>(m2.blocks), static_cast<long long>(m2.head)));
  return {std::abs(rel) <= 0.02 && delta_ok,
          fmt("M=2 total %lld (%+.2f%% vs 14.23M), M=4 minus M=2 = %lld (%s two layers)",
              static_cast<long long>(m2.total), 100 * rel, static_cast<long long>(delta),
              delta_ok ? "equals" : "DIFFERS from")};
}

Outcome baselines() {
  ExperimentConfig cfg = toy(1, 0.0);
  cfg.fl.rounds = 10;
  auto [train, test] = build_datasets(cfg);
  FedAvgSimulation head(BaselineKind::kFedHead, cfg.vit(), cfg.fl, train, test, lanes);
  const auto phi = checksum(head.global().phi.named());
  const auto w = checksum(head.global().w_global.named());
  const auto theta = checksum(head.global().theta.named());
  int changed_rounds = 0;
  for (int r = 0; r < cfg.fl.rounds; ++r) {
    head.run_round(r);
    changed_rounds += checksum(head.global().phi.named()) != phi ||
                      checksum(head.global().w_global.named()) != w;
  }
  const bool head_trained = checksum(head.global().theta.named()) != theta;

  ExperimentConfig single = cfg;
  single.fl.num_clients = 1;
  single.fl.select_ratio = 1.0;
  single.fl.rounds = 5;
  FedAvgSimulation full(BaselineKind::kFedFull, single.vit(), single.fl, train, test, lanes);
  std::vector<double> federated;
  for (int r = 0; r < single.fl.rounds; ++r) federated.push_back(full.run_round(r).mean_client_loss);
  const auto central = train_centralized(single.vit(), single.fl, train);
  const bool same = federated == central;
  std::string traj;
  for (double l : federated) traj += fmt("%.6f ", l);
  info("Fed-Full K=1 loss trajectory " + traj);
  return {changed_rounds == 0 && head_trained && same,
          fmt("Fed-Head rounds touching the backbone %d/%d (head %s); Fed-Full K=1 vs centralized "
              "%s over %d rounds",
              changed_rounds, cfg.fl.rounds, head_trained ? "trained" : "NOT trained",
              same ? "bit-identical" : "DIFFERENT", single.fl.rounds)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace maskfed

int main(int argc, char** argv) {
  using namespace maskfed;
  tune_allocator();
  CLI::App app{"maskfed acceptance checks"};
  std::vector<int> only;
  std::string report_dir;
  lanes = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--criterion", only, "run only these criteria")->check(CLI::Range(1, 9));
  app.add_option("--threads", lanes, "client lanes for simulations")->check(CLI::PositiveNumber);
  app.add_option("--config", toy_config_path, "toy experiment config");
  app.add_option("--report", report_dir, "also write each criterion's lines here");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all = {
      {1, "cost ratios at ViT-B geometry", cost_ratios},
      {2, "cost identity and measured cross-check", cost_identity},
      {3, "gradient suite", gradient_suite},
      {4, "median sampler oracle", median_oracle},
      {5, "protocol invariants", protocol},
      {6, "toy convergence", toy_convergence},
      {7, "masking robustness", masking_robustness},
      {8, "parameter count", param_count},
      {9, "baseline sanity", baselines},
  };
  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    emit(fmt("criterion %d %s: %s: %s", c.id, o.pass ? "PASS" : "FAIL", c.name,
             o.detail.c_str()));
    if (!report_dir.empty()) {
      std::filesystem::create_directories(report_dir);
      std::ofstream(std::filesystem::path(report_dir) / fmt("criterion_%d.txt", c.id)) << transcript;
    }
    transcript.clear();
  }
  return failures;
}
