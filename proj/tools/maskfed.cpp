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

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "maskfed/config.hpp"
#include "maskfed/cost.hpp"
#include "maskfed/errors.hpp"
#include "maskfed/experiment.hpp"
#include "maskfed/parallel.hpp"
#include "maskfed/selftest.hpp"

namespace {

using namespace maskfed;

int cmd_run(const std::string& config_path, const std::string& out, int threads,
            const std::string& baseline) {
  ExperimentConfig cfg = parse_config(config_path);
  if (!baseline.empty()) {
    cfg.baseline = baseline;
    cfg.validate();
  }
  RunOptions options;
  options.threads = threads;
  options.out_dir = out;
  options.on_round = [](const RoundMetrics& m) {
    std::cerr << "round " << m.round << " loss " << m.mean_client_loss;
    if (m.server_loss) std::cerr << " server " << *m.server_loss;
    if (m.test_acc) std::cerr << " acc " << *m.test_acc << " personalized " << *m.personalized_acc;
    std::cerr << " (" << std::fixed << std::setprecision(2) << m.wallclock_s << "s)\n"
              << std::defaultfloat << std::setprecision(6);
  };
  RunResult result = run_experiment(cfg, options);
  std::cout << result.summary_json();
  std::cout << "wrote " << result.out_dir.string() << "\n";
  return 0;
}

int cmd_cost(const std::string& config_path) {
  const ExperimentConfig cfg = parse_config(config_path);
  const ViTConfig vit = cfg.vit();
  CostInput base;
  base.n_t = vit.depth;
  base.n_global = vit.global_depth();
  base.n = vit.num_patches();
  base.d = vit.dim;
  base.bandwidth_mbps = cfg.cost.bandwidth_mbps;
  CostInput clamped = base;
  clamped.keep = KeepRule::kClamped;

  const std::vector<double> ratios = {0.0, 0.25, 0.5, 0.75, 0.95};
  const auto table = cost_ratio_table(base, ratios);
  const auto clamped_table = cost_ratio_table(clamped, ratios);
  const double measured_zero =
      static_cast<double>(measured_macs(vit, 0.0, CostPhase::kTrain));

  const auto w_params = static_cast<std::uint64_t>(
      vit.global_depth() * layer_param_count(vit.dim, vit.mlp_ratio) + 2 * vit.dim);
  const double per_client =
      static_cast<double>(cfg.dataset.classes) * cfg.dataset.train_per_class / cfg.fl.num_clients;

  std::ostringstream csv;
  csv << "r_m,forward_units,backward_units,total_units,gflops,ratio,measured_macs,"
         "measured_ratio,clamped_ratio,deviation,round_time_s\n";
  std::printf("geometry: N_T=%lld N=%lld n=%lld d=%lld bandwidth=%.0f Mbps\n",
              static_cast<long long>(base.n_t), static_cast<long long>(base.n_global),
              static_cast<long long>(base.n), static_cast<long long>(base.d),
              base.bandwidth_mbps);
  std::printf("%6s %16s %16s %16s %9s %7s %16s %8s %8s %9s %10s\n", "r_m", "forward", "backward",
              "total", "GFLOPs", "ratio", "measured", "m.ratio", "c.ratio", "deviation",
              "round_s");
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    CostInput in = base;
    in.r_m = ratios[i];
    const double fwd = forward_cost(in);
    const double bwd = backward_cost(in);
    const double total = total_cost(in);
    const auto measured = measured_macs(vit, ratios[i], CostPhase::kTrain);
    const double m_ratio = static_cast<double>(measured) / measured_zero;
    const double deviation = m_ratio / clamped_table[i].ratio - 1.0;
    const auto kept = keep_count(vit.num_patches(), ratios[i]);
    const auto records = static_cast<std::size_t>(per_client);
    const auto up = bpf_payload_size(records, kept, vit.dim);
    const double seconds = comm_seconds(up, 4 * w_params, base.bandwidth_mbps);
    std::printf("%6.2f %16.0f %16.0f %16.0f %9.3f %7.4f %16llu %8.4f %8.4f %+9.4f %10.4f\n",
                ratios[i], fwd, bwd, total, to_gflops(total), table[i].ratio,
                static_cast<unsigned long long>(measured), m_ratio, clamped_table[i].ratio,
                deviation, seconds);
    csv << ratios[i] << "," << std::setprecision(17) << fwd << "," << bwd << "," << total << ","
        << to_gflops(total) << "," << table[i].ratio << "," << measured << "," << m_ratio << ","
        << clamped_table[i].ratio << "," << deviation << "," << seconds << "\n"
        << std::setprecision(6);
  }
  const auto params = trainable_param_count(vit);
  std::printf("client trainable parameters: %lld (blocks %lld, embeddings %lld, head %lld)\n",
              static_cast<long long>(params.total), static_cast<long long>(params.blocks),
              static_cast<long long>(params.embeddings), static_cast<long long>(params.head));
  std::printf("round time assumes one client uploading %.0f records and receiving w_global\n",
              per_client);
  std::printf("\n%s", csv.str().c_str());
  return 0;
}

int cmd_partition_stats(const std::string& config_path) {
  const ExperimentConfig cfg = parse_config(config_path);
  auto [train, test] = build_datasets(cfg);
  auto partition = dirichlet_partition(train.labels, cfg.fl.num_clients, cfg.fl.beta, cfg.fl.seed);
  auto clients = make_client_datasets(partition, train.labels);
  std::cout << partition_csv(clients, cfg.dataset.classes);
  std::cout << "# mean_tv_distance," << mean_tv_distance(clients, cfg.dataset.classes) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  maskfed::tune_allocator();
  CLI::App app{"maskfed: masked-image federated fine-tuning simulator"};
  app.require_subcommand(1);

  std::string config_path, out = "runs/run", baseline;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  auto* run = app.add_subcommand("run", "train EFTViT or a baseline and write a run directory");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--out", out, "run directory; suffixed when it exists");
  run->add_option("--threads", threads, "client lanes")->check(CLI::PositiveNumber);
  run->add_option("--baseline", baseline, "override the config's baseline")
      ->check(CLI::IsMember({"none", "fed_full", "fed_head"}));

  auto* cost = app.add_subcommand("cost", "closed-form and measured cost table");
  cost->add_option("--config", config_path, "experiment config (JSON)")->required();

  auto* selftest = app.add_subcommand("selftest", "gradient checks, sampler oracle, cost identities");

  auto* stats = app.add_subcommand("partition-stats", "per-client class histogram as CSV");
  stats->add_option("--config", config_path, "experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config_path, out, threads, baseline);
    if (*cost) return cmd_cost(config_path);
    if (*selftest) return run_selftest(std::cout).ok() ? 0 : 1;
    if (*stats) return cmd_partition_stats(config_path);
  } catch (const maskfed::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
