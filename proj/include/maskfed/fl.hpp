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
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "maskfed/bpf.hpp"
#include "maskfed/data.hpp"
#include "maskfed/optim.hpp"
#include "maskfed/vit.hpp"

namespace maskfed {

struct FLConfig {
  int num_clients = 100;      // K
  double select_ratio = 0.1;  // P
  int rounds = 30;
  int local_epochs = 3;  // E
  int server_epochs = 1;
  double beta = 0.1;
  double mask_ratio = 0.75;  // r_m
  std::uint64_t seed = 0;
  double lr = 5e-5;
  double weight_decay = 0.05;
  double warmup_frac = 0.1;
  int batch_size = 32;
  bool augment = true;
  int eval_every = 1;  // the final round is always evaluated

  void validate() const;
  bool operator==(const FLConfig&) const = default;
  std::int64_t warmup_rounds() const;
  // Learning rate used throughout round `round` (0-based).
  double round_lr(int round) const;
};

// max(1, round(P * K)) distinct ids, uniform without replacement, ascending.
std::vector<int> select_clients(int num_clients, double select_ratio, std::mt19937_64& rng);

// Dataset-size weighted average of same-shaped tensor lists (FedAvg).
std::vector<Tensor> fedavg(const std::vector<std::vector<Tensor>>& members,
                           std::span<const double> sizes);

struct ClientState {
  int client_id = 0;
  LocalModule phi;
  Head theta_local;
  GlobalModule w_snapshot;  // last broadcast received
  std::unique_ptr<AdamW> optimizer;
  const ClientDataset* data = nullptr;
};

struct ServerState {
  GlobalModule w_global;
  Head theta_server;
  std::unique_ptr<AdamW> optimizer;
  std::vector<PatchFeatureRecord> bpf;  // merged payloads of the latest round
};

struct RoundMetrics {
  int round = 0;
  std::vector<int> selected;
  std::vector<int> skipped;  // selected clients with no training data
  double mean_client_loss = 0.0;
  std::optional<double> server_loss;
  std::optional<double> test_acc;
  std::optional<double> personalized_acc;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::uint64_t client_macs = 0;
  std::int64_t bpf_records = 0;
  double wallclock_s = 0.0;

  // One JSON object on one line; wallclock is left out so the stream is
  // reproducible.
  std::string to_json() const;
};

struct EvalResult {
  double test_acc = 0.0;          // mean over all clients of plain test-set accuracy
  double personalized_acc = 0.0;  // mean over non-empty clients, test classes reweighted
                                  // to each client's own label mix
  std::vector<double> client_weighted;
  std::vector<double> client_plain;
};

// Per-class accuracy on the shared test set turned into the two reported
// numbers. `per_class[k][c]` is client k's accuracy on class c.
EvalResult summarize_eval(const std::vector<std::vector<double>>& per_class,
                          const std::vector<ClientDataset>& clients, const Dataset& test);

// Chunked full-image accuracy per class.
std::vector<double> per_class_accuracy(const ParamSet& params, const Dataset& test,
                                       const ViTConfig& cfg);

struct LocalTrainStats {
  double loss_sum = 0.0;
  std::int64_t steps = 0;
  std::uint64_t macs = 0;

  double mean_loss() const { return steps == 0 ? 0.0 : loss_sum / static_cast<double>(steps); }
};

// The client-side loop shared by EFTViT clients, the FedAvg baselines and the
// centralized trainer: `epochs` passes over `indices`, masking at
// `mask_ratio`, one optimizer step per batch. Gradients reach exactly the
// tensors that require them. When `pool` is set, every batch's patch features
// are collected.
LocalTrainStats train_local(const ParamSet& params, AdamW& optimizer, const Dataset& train,
                            std::span<const std::int64_t> indices, int client_id, int round,
                            double mask_ratio, double lr, const FLConfig& fl,
                            const ViTConfig& cfg, FeaturePool* pool);

struct ClientUpdateResult {
  int client_id = 0;
  bool skipped = false;
  double mean_loss = 0.0;
  std::uint64_t macs = 0;
  std::vector<std::uint8_t> payload;
  std::uint64_t global_before = 0;
  std::uint64_t global_after = 0;
};

ClientUpdateResult client_update(ClientState& client, const Dataset& train, int round, double lr,
                                 const FLConfig& fl, const ViTConfig& cfg);

struct ServerUpdateResult {
  bool trained = false;
  double mean_loss = 0.0;
  std::int64_t records = 0;
};

// Replaces the server's BPF with the given payloads (merged in ascending
// client order) and trains w_global and theta_server on it.
ServerUpdateResult server_update(ServerState& server,
                                 std::vector<std::pair<int, std::vector<std::uint8_t>>> payloads,
                                 int round, double lr, const FLConfig& fl, const ViTConfig& cfg);

// Checksums captured while a round runs, for protocol audits.
struct RoundTrace {
  std::uint64_t server_before = 0;
  std::vector<std::uint64_t> broadcast;  // per selected client, right after broadcast
  std::vector<std::uint64_t> update_before;
  std::vector<std::uint64_t> update_after;
  std::vector<int> bpf_clients;  // distinct sources of the server's BPF after the round
};

class EftvitSimulation {
 public:
  EftvitSimulation(const ViTConfig& vit, const FLConfig& fl, const Dataset& train,
                   const Dataset& test, int threads);

  RoundMetrics run_round(int round);
  EvalResult evaluate() const;
  void save_checkpoints(const std::filesystem::path& dir) const;

  const RoundTrace& last_trace() const { return trace_; }
  const std::vector<ClientDataset>& client_data() const { return client_data_; }
  std::vector<ClientState>& clients() { return clients_; }
  ServerState& server() { return server_; }
  const ViTConfig& vit() const { return vit_; }
  const FLConfig& fl() const { return fl_; }

 private:
  ViTConfig vit_;
  FLConfig fl_;
  const Dataset& train_;
  const Dataset& test_;
  int threads_;
  std::vector<ClientDataset> client_data_;
  std::vector<ClientState> clients_;
  ServerState server_;
  RoundTrace trace_;
};

enum class BaselineKind { kFedFull, kFedHead };

std::string baseline_name(BaselineKind kind);
BaselineKind parse_baseline(const std::string& name);

// FedAvg over full images; fed_full trains every tensor on clients, fed_head
// only the classification head.
class FedAvgSimulation {
 public:
  FedAvgSimulation(BaselineKind kind, const ViTConfig& vit, const FLConfig& fl,
                   const Dataset& train, const Dataset& test, int threads);

  RoundMetrics run_round(int round);
  EvalResult evaluate() const;
  void save_checkpoints(const std::filesystem::path& dir) const;

  const ParamSet& global() const { return global_; }
  const std::vector<ClientDataset>& client_data() const { return client_data_; }

 private:
  std::vector<NamedTensor> trained(const ParamSet& p) const;

  BaselineKind kind_;
  ViTConfig vit_;
  FLConfig fl_;
  const Dataset& train_;
  const Dataset& test_;
  int threads_;
  std::vector<ClientDataset> client_data_;
  ParamSet global_;
  std::vector<ParamSet> locals_;
  std::vector<std::unique_ptr<AdamW>> optimizers_;
};

// One model trained on the whole training set with the client loop of
// client 0 and no masking; returns the mean loss per round.
std::vector<double> train_centralized(const ViTConfig& vit, const FLConfig& fl,
                                      const Dataset& train);

}  // namespace maskfed
