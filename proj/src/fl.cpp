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

#include "maskfed/fl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "json.hpp"
#include "maskfed/errors.hpp"
#include "maskfed/ops.hpp"
#include "maskfed/parallel.hpp"
#include "maskfed/rng.hpp"

namespace maskfed {

namespace {

constexpr std::int64_t kEvalChunk = 256;

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

std::vector<NamedTensor> concat(std::vector<NamedTensor> a, const std::vector<NamedTensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<NamedTensor> all_named(const ParamSet& p) {
  return concat(concat(p.phi.named(), p.w_global.named()), p.theta.named());
}

std::uint64_t wire_bytes(const std::vector<NamedTensor>& named) {
  return 4 * static_cast<std::uint64_t>(parameter_count(named));
}

// Stacks the images at `indices`, augmenting each one in order.
Tensor batch_images(const Dataset& data, std::span<const std::int64_t> indices,
                    std::mt19937_64& rng, const AugmentOptions& options) {
  if (!options.enabled) return data.gather(indices);
  const auto per = data.channels() * data.height() * data.width();
  std::vector<double> values;
  values.reserve(indices.size() * static_cast<std::size_t>(per));
  for (auto i : indices) {
    Tensor img = augment(data.image(i), rng, options);
    values.insert(values.end(), img.data().begin(), img.data().end());
  }
  return Tensor::from({static_cast<std::int64_t>(indices.size()), data.channels(), data.height(),
                       data.width()},
                      std::move(values), data.images.dtype());
}

void save_module(const std::filesystem::path& path, const std::vector<NamedTensor>& named) {
  std::filesystem::create_directories(path.parent_path());
  save_tensors(path, named);
}

std::vector<ClientDataset> partition_clients(const Dataset& train, const FLConfig& fl) {
  auto partition = dirichlet_partition(train.labels, fl.num_clients, fl.beta, fl.seed);
  return make_client_datasets(partition, train.labels);
}

ParamSet initial_params(const ViTConfig& vit, const FLConfig& fl) {
  auto rng = make_stream(fl.seed, StreamPurpose::kInit);
  return init_params(vit, rng);
}

}  // namespace

void FLConfig::validate() const {
  require(num_clients >= 1, "fl.k: need at least one client");
  require(select_ratio > 0.0 && select_ratio <= 1.0, "fl.p: selection ratio must lie in (0, 1]");
  require(rounds >= 1, "fl.rounds: need at least one round");
  require(local_epochs >= 1, "fl.local_epochs: need at least one epoch");
  require(server_epochs >= 1, "fl.server_epochs: need at least one epoch");
  require(beta > 0.0 && std::isfinite(beta), "fl.beta: must be positive");
  require(eval_every >= 1, "fl.eval_every: must be >= 1");
  require(mask_ratio >= 0.0 && mask_ratio < 1.0, "train.r_m: masking ratio must lie in [0, 1)");
  require(lr >= 0.0 && std::isfinite(lr), "train.lr: must be non-negative");
  require(weight_decay >= 0.0, "train.weight_decay: must be non-negative");
  require(warmup_frac >= 0.0 && warmup_frac <= 1.0, "train.warmup_frac: must lie in [0, 1]");
  require(batch_size >= 1, "train.batch_size: must be >= 1");
}

std::int64_t FLConfig::warmup_rounds() const {
  return static_cast<std::int64_t>(std::ceil(warmup_frac * rounds));
}

double FLConfig::round_lr(int round) const {
  return cosine_warmup_lr(round + 1, static_cast<std::int64_t>(rounds) + 1, warmup_rounds(), lr);
}

std::vector<int> select_clients(int num_clients, double select_ratio, std::mt19937_64& rng) {
  require(num_clients >= 1, "fl.k: need at least one client");
  require(select_ratio > 0.0 && select_ratio <= 1.0, "fl.p: selection ratio must lie in (0, 1]");
  const auto want = std::clamp<long>(std::lround(select_ratio * num_clients), 1, num_clients);
  std::vector<int> ids(static_cast<std::size_t>(num_clients));
  std::iota(ids.begin(), ids.end(), 0);
  for (long i = 0; i < want; ++i) {
    std::uniform_int_distribution<long> pick(i, num_clients - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(rng))]);
  }
  ids.resize(static_cast<std::size_t>(want));
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<Tensor> fedavg(const std::vector<std::vector<Tensor>>& members,
                           std::span<const double> sizes) {
  if (members.empty() || members.size() != sizes.size()) {
    throw DimensionError("fedavg: need one size per member");
  }
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  if (!(total > 0.0)) throw DimensionError("fedavg: total weight must be positive");
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < members.front().size(); ++i) {
    const Tensor& first = members.front()[i];
    Tensor acc = Tensor::zeros(first.shape(), first.dtype());
    auto dst = acc.mutable_data();
    for (std::size_t j = 0; j < members.size(); ++j) {
      const Tensor& t = members[j].at(i);
      if (t.shape() != first.shape()) throw DimensionError("fedavg: shape mismatch");
      const double w = sizes[j] / total;
      auto src = t.data();
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += w * src[e];
    }
    round_to(first.dtype(), dst);
    out.push_back(acc);
  }
  return out;
}

std::string RoundMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["round"] = round;
  j["selected"] = selected;
  j["mean_client_loss"] = mean_client_loss;
  j["server_loss"] = server_loss ? nlohmann::ordered_json(*server_loss) : nullptr;
  j["test_acc"] = test_acc ? nlohmann::ordered_json(*test_acc) : nullptr;
  j["bytes_up"] = bytes_up;
  j["bytes_down"] = bytes_down;
  j["client_macs"] = client_macs;
  j["personalized_acc"] = personalized_acc ? nlohmann::ordered_json(*personalized_acc) : nullptr;
  j["bpf_records"] = bpf_records;
  j["skipped"] = skipped;
  return j.dump();
}

std::vector<double> per_class_accuracy(const ParamSet& params, const Dataset& test,
                                       const ViTConfig& cfg) {
  if (test.size() == 0) throw ConfigError("dataset.test_per_class: test set is empty");
  std::vector<double> correct(static_cast<std::size_t>(cfg.num_classes), 0.0);
  std::vector<double> seen(correct.size(), 0.0);
  for (std::int64_t start = 0; start < test.size(); start += kEvalChunk) {
    const auto stop = std::min(test.size(), start + kEvalChunk);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    Graph g;
    Tensor logits = infer_logits(g, params, test.gather(idx), cfg);
    auto values = logits.data();
    const auto c = logits.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto row = values.subspan(r * static_cast<std::size_t>(c), static_cast<std::size_t>(c));
      const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
      const auto label = static_cast<std::size_t>(test.labels[static_cast<std::size_t>(idx[r])]);
      seen.at(label) += 1.0;
      if (pred == static_cast<std::ptrdiff_t>(label)) correct[label] += 1.0;
    }
  }
  for (std::size_t k = 0; k < correct.size(); ++k) {
    correct[k] = seen[k] > 0 ? correct[k] / seen[k] : 0.0;
  }
  return correct;
}

EvalResult summarize_eval(const std::vector<std::vector<double>>& per_class,
                          const std::vector<ClientDataset>& clients, const Dataset& test) {
  std::vector<double> test_share(per_class.empty() ? 0 : per_class.front().size(), 0.0);
  for (int label : test.labels) test_share.at(static_cast<std::size_t>(label)) += 1.0;
  for (auto& s : test_share) s /= static_cast<double>(test.size());

  EvalResult out;
  double weighted_sum = 0.0;
  int weighted_n = 0;
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    const auto& acc = per_class[k];
    double plain = 0.0;
    for (std::size_t c = 0; c < acc.size(); ++c) plain += test_share[c] * acc[c];
    out.client_plain.push_back(plain);
    double weighted = 0.0;
    const auto& cd = clients.at(k);
    if (cd.size() > 0) {
      for (auto [cls, n] : cd.class_counts) {
        weighted += static_cast<double>(n) / static_cast<double>(cd.size()) *
                    acc.at(static_cast<std::size_t>(cls));
      }
      weighted_sum += weighted;
      ++weighted_n;
    }
    out.client_weighted.push_back(weighted);
  }
  out.test_acc = out.client_plain.empty()
                       ? 0.0
                       : std::accumulate(out.client_plain.begin(), out.client_plain.end(), 0.0) /
                             static_cast<double>(out.client_plain.size());
  out.personalized_acc = weighted_n == 0 ? 0.0 : weighted_sum / weighted_n;
  return out;
}

LocalTrainStats train_local(const ParamSet& params, AdamW& optimizer, const Dataset& train,
                            std::span<const std::int64_t> indices, int client_id, int round,
                            double mask_ratio, double lr, const FLConfig& fl,
                            const ViTConfig& cfg, FeaturePool* pool) {
  LocalTrainStats stats;
  const AugmentOptions aug{fl.augment, 2};
  const auto cid = static_cast<std::uint64_t>(client_id);
  const auto rnd = static_cast<std::uint64_t>(round);
  for (int epoch = 0; epoch < fl.local_epochs; ++epoch) {
    const auto ep = static_cast<std::uint64_t>(epoch);
    auto batch_rng = make_stream(fl.seed, StreamPurpose::kBatch, cid, rnd, ep);
    auto mask_rng = make_stream(fl.seed, StreamPurpose::kMask, cid, rnd, ep);
    auto aug_rng = make_stream(fl.seed, StreamPurpose::kAugment, cid, rnd, ep);
    for (const auto& idx : batches(indices, fl.batch_size, batch_rng)) {
      Tensor images = batch_images(train, idx, aug_rng, aug);
      const auto labels = train.gather_labels(idx);
      MaskedBatch batch = mask_ratio > 0.0
                              ? make_masked_batch(images, labels, mask_ratio, mask_rng, cfg)
                              : make_full_batch(images, labels, cfg);
      Graph g;
      Tensor features = local_forward(g, params.phi, batch, cfg);
      Tensor repr = global_forward(g, params.w_global, features, cfg);
      Tensor loss = ops::cross_entropy(g, head_forward(g, params.theta, repr), labels);
      g.backward(loss);
      optimizer.step(lr);
      optimizer.zero_grad();
      if (pool != nullptr) pool->collect(epoch, features, batch);
      stats.loss_sum += loss.item();
      ++stats.steps;
      stats.macs += g.mac_count();
    }
  }
  return stats;
}

ClientUpdateResult client_update(ClientState& client, const Dataset& train, int round, double lr,
                                 const FLConfig& fl, const ViTConfig& cfg) {
  ClientUpdateResult out;
  out.client_id = client.client_id;
  const auto frozen = client.w_snapshot.named();
  out.global_before = checksum(frozen);
  if (client.data == nullptr || client.data->size() == 0) {
    out.skipped = true;
    out.global_after = out.global_before;
    return out;
  }
  const ParamSet view{client.phi, client.w_snapshot, client.theta_local};
  FeaturePool pool(client.client_id);
  auto stats = train_local(view, *client.optimizer, train, client.data->indices, client.client_id,
                           round, fl.mask_ratio, lr, fl, cfg, &pool);
  out.mean_loss = stats.mean_loss();
  out.macs = stats.macs;

  const auto median = class_median(client.data->class_counts);
  auto rng = make_stream(fl.seed, StreamPurpose::kBalance, static_cast<std::uint64_t>(client.client_id),
                         static_cast<std::uint64_t>(round));
  auto balanced = median_balance(client.client_id, pool.records(), client.data->class_counts,
                                 median, rng);
  out.payload = serialize_bpf(balanced);
  out.global_after = checksum(frozen);
  return out;
}

ServerUpdateResult server_update(ServerState& server,
                                 std::vector<std::pair<int, std::vector<std::uint8_t>>> payloads,
                                 int round, double lr, const FLConfig& fl, const ViTConfig& cfg) {
  ServerUpdateResult out;
  server.bpf.clear();
  std::sort(payloads.begin(), payloads.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [id, bytes] : payloads) {
    auto set = deserialize_bpf(bytes);
    for (auto& r : set.records) server.bpf.push_back(std::move(r));
  }
  out.records = static_cast<std::int64_t>(server.bpf.size());
  if (server.bpf.empty()) return out;

  const auto rows = server.bpf.front().features.dim(0);
  const auto d = server.bpf.front().features.dim(1);
  for (const auto& r : server.bpf) {
    if (r.features.dim(0) != rows || r.features.dim(1) != d) {
      throw DimensionError("server_update: BPF records disagree on shape");
    }
  }
  std::vector<std::int64_t> all(server.bpf.size());
  std::iota(all.begin(), all.end(), 0);
  LocalTrainStats stats;
  for (int epoch = 0; epoch < fl.server_epochs; ++epoch) {
    auto rng = make_stream(fl.seed, StreamPurpose::kServer, 0, static_cast<std::uint64_t>(round),
                           static_cast<std::uint64_t>(epoch));
    for (const auto& idx : batches(all, fl.batch_size, rng)) {
      std::vector<double> values;
      values.reserve(idx.size() * static_cast<std::size_t>(rows * d));
      std::vector<int> labels;
      for (auto i : idx) {
        const auto& rec = server.bpf[static_cast<std::size_t>(i)];
        values.insert(values.end(), rec.features.data().begin(), rec.features.data().end());
        labels.push_back(rec.label);
      }
      Tensor features = Tensor::from({static_cast<std::int64_t>(idx.size()), rows, d},
                                     std::move(values), cfg.dtype);
      Graph g;
      Tensor repr = global_forward(g, server.w_global, features, cfg);
      Tensor loss = ops::cross_entropy(g, head_forward(g, server.theta_server, repr), labels);
      g.backward(loss);
      server.optimizer->step(lr);
      server.optimizer->zero_grad();
      stats.loss_sum += loss.item();
      ++stats.steps;
    }
  }
  out.trained = true;
  out.mean_loss = stats.mean_loss();
  return out;
}

EftvitSimulation::EftvitSimulation(const ViTConfig& vit, const FLConfig& fl, const Dataset& train,
                                   const Dataset& test, int threads)
    : vit_(vit), fl_(fl), train_(train), test_(test), threads_(threads) {
  vit_.validate();
  fl_.validate();
  client_data_ = partition_clients(train_, fl_);
  const ParamSet init = initial_params(vit_, fl_);

  server_.w_global = clone(init.w_global);
  server_.theta_server = clone(init.theta);
  auto server_params = concat(server_.w_global.named(), server_.theta_server.named());
  set_trainable(server_params, true);
  server_.optimizer = std::make_unique<AdamW>(tensors_of(server_params),
                                              AdamWOptions{.weight_decay = fl_.weight_decay});

  for (int k = 0; k < fl_.num_clients; ++k) {
    ClientState c;
    c.client_id = k;
    c.phi = clone(init.phi);
    c.theta_local = clone(init.theta);
    c.w_snapshot = clone(init.w_global);
    set_trainable(c.w_snapshot.named(), false);
    auto trainable = concat(c.phi.named(), c.theta_local.named());
    set_trainable(trainable, true);
    c.optimizer = std::make_unique<AdamW>(tensors_of(trainable),
                                          AdamWOptions{.weight_decay = fl_.weight_decay});
    c.data = &client_data_[static_cast<std::size_t>(k)];
    clients_.push_back(std::move(c));
  }
}

RoundMetrics EftvitSimulation::run_round(int round) {
  if (round < 0 || round >= fl_.rounds) throw ConfigError("round index out of range");
  const auto start = std::chrono::steady_clock::now();
  RoundMetrics m;
  m.round = round;
  auto select_rng = make_stream(fl_.seed, StreamPurpose::kSelect, 0, static_cast<std::uint64_t>(round));
  m.selected = select_clients(fl_.num_clients, fl_.select_ratio, select_rng);

  trace_ = RoundTrace{};
  const auto server_named = server_.w_global.named();
  trace_.server_before = checksum(server_named);
  for (int k : m.selected) {
    auto& snapshot = clients_[static_cast<std::size_t>(k)].w_snapshot;
    assign_values(snapshot.named(), server_named);
    trace_.broadcast.push_back(checksum(snapshot.named()));
    m.bytes_down += wire_bytes(server_named);
  }

  const double lr = fl_.round_lr(round);
  std::vector<ClientUpdateResult> results(m.selected.size());
  parallel_for(m.selected.size(), threads_, [&](std::size_t i) {
    auto& client = clients_[static_cast<std::size_t>(m.selected[i])];
    results[i] = client_update(client, train_, round, lr, fl_, vit_);
  });

  std::vector<std::pair<int, std::vector<std::uint8_t>>> payloads;
  double loss_sum = 0.0;
  int trained = 0;
  for (auto& r : results) {
    trace_.update_before.push_back(r.global_before);
    trace_.update_after.push_back(r.global_after);
    if (r.global_before != r.global_after) {
      throw Error("client " + std::to_string(r.client_id) + " modified the frozen global module");
    }
    if (r.skipped) {
      m.skipped.push_back(r.client_id);
      continue;
    }
    loss_sum += r.mean_loss;
    ++trained;
    m.client_macs += r.macs;
    m.bytes_up += r.payload.size();
    payloads.emplace_back(r.client_id, std::move(r.payload));
  }
  m.mean_client_loss = trained > 0 ? loss_sum / trained : 0.0;

  auto server = server_update(server_, std::move(payloads), round, lr, fl_, vit_);
  m.bpf_records = server.records;
  if (server.trained) m.server_loss = server.mean_loss;
  std::set<int> sources;
  for (const auto& r : server_.bpf) sources.insert(r.client_id);
  trace_.bpf_clients.assign(sources.begin(), sources.end());

  if ((round + 1) % fl_.eval_every == 0 || round == fl_.rounds - 1) {
    auto eval = evaluate();
    m.test_acc = eval.test_acc;
    m.personalized_acc = eval.personalized_acc;
  }
  m.wallclock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

EvalResult EftvitSimulation::evaluate() const {
  std::vector<std::vector<double>> per_class(clients_.size());
  parallel_for(clients_.size(), threads_, [&](std::size_t k) {
    const auto& c = clients_[k];
    per_class[k] = per_class_accuracy(ParamSet{c.phi, server_.w_global, c.theta_local}, test_, vit_);
  });
  return summarize_eval(per_class, client_data_, test_);
}

void EftvitSimulation::save_checkpoints(const std::filesystem::path& dir) const {
  save_module(dir / "server" / "w_global.eftv", server_.w_global.named());
  save_module(dir / "server" / "theta_server.eftv", server_.theta_server.named());
  for (const auto& c : clients_) {
    const auto base = dir / "clients" / std::to_string(c.client_id);
    save_module(base / "phi.eftv", c.phi.named());
    save_module(base / "theta_local.eftv", c.theta_local.named());
  }
}

std::string baseline_name(BaselineKind kind) {
  return kind == BaselineKind::kFedFull ? "fed_full" : "fed_head";
}

BaselineKind parse_baseline(const std::string& name) {
  if (name == "fed_full") return BaselineKind::kFedFull;
  if (name == "fed_head") return BaselineKind::kFedHead;
  throw ConfigError("baseline: unknown kind '" + name + "'");
}

FedAvgSimulation::FedAvgSimulation(BaselineKind kind, const ViTConfig& vit, const FLConfig& fl,
                                   const Dataset& train, const Dataset& test, int threads)
    : kind_(kind), vit_(vit), fl_(fl), train_(train), test_(test), threads_(threads) {
  vit_.validate();
  fl_.validate();
  client_data_ = partition_clients(train_, fl_);
  global_ = initial_params(vit_, fl_);
  set_trainable(all_named(global_), false);
  set_trainable(trained(global_), true);
  for (int k = 0; k < fl_.num_clients; ++k) {
    ParamSet local = clone(global_);
    optimizers_.push_back(std::make_unique<AdamW>(
        tensors_of(trained(local)), AdamWOptions{.weight_decay = fl_.weight_decay}));
    locals_.push_back(std::move(local));
  }
}

std::vector<NamedTensor> FedAvgSimulation::trained(const ParamSet& p) const {
  return kind_ == BaselineKind::kFedFull ? all_named(p) : p.theta.named();
}

RoundMetrics FedAvgSimulation::run_round(int round) {
  if (round < 0 || round >= fl_.rounds) throw ConfigError("round index out of range");
  const auto start = std::chrono::steady_clock::now();
  RoundMetrics m;
  m.round = round;
  auto select_rng = make_stream(fl_.seed, StreamPurpose::kSelect, 0, static_cast<std::uint64_t>(round));
  m.selected = select_clients(fl_.num_clients, fl_.select_ratio, select_rng);
  const auto payload = wire_bytes(trained(global_));
  for (int k : m.selected) {
    assign_values(all_named(locals_[static_cast<std::size_t>(k)]), all_named(global_));
    m.bytes_down += payload;
  }

  const double lr = fl_.round_lr(round);
  std::vector<LocalTrainStats> stats(m.selected.size());
  parallel_for(m.selected.size(), threads_, [&](std::size_t i) {
    const auto k = static_cast<std::size_t>(m.selected[i]);
    const auto& data = client_data_[k];
    if (data.size() == 0) return;
    stats[i] = train_local(locals_[k], *optimizers_[k], train_, data.indices, m.selected[i], round,
                           0.0, lr, fl_, vit_, nullptr);
  });

  std::vector<std::vector<Tensor>> members;
  std::vector<double> sizes;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < m.selected.size(); ++i) {
    const auto k = static_cast<std::size_t>(m.selected[i]);
    if (client_data_[k].size() == 0) {
      m.skipped.push_back(m.selected[i]);
      continue;
    }
    members.push_back(tensors_of(trained(locals_[k])));
    sizes.push_back(static_cast<double>(client_data_[k].size()));
    loss_sum += stats[i].mean_loss();
    m.client_macs += stats[i].macs;
    m.bytes_up += payload;
  }
  if (!members.empty()) {
    m.mean_client_loss = loss_sum / static_cast<double>(members.size());
    auto averaged = fedavg(members, sizes);
    auto dst = tensors_of(trained(global_));
    for (std::size_t i = 0; i < dst.size(); ++i) {
      auto out = dst[i].mutable_data();
      std::copy(averaged[i].data().begin(), averaged[i].data().end(), out.begin());
    }
  }

  if ((round + 1) % fl_.eval_every == 0 || round == fl_.rounds - 1) {
    auto eval = evaluate();
    m.test_acc = eval.test_acc;
    m.personalized_acc = eval.personalized_acc;
  }
  m.wallclock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

EvalResult FedAvgSimulation::evaluate() const {
  auto acc = per_class_accuracy(global_, test_, vit_);
  std::vector<std::vector<double>> per_class(client_data_.size(), acc);
  return summarize_eval(per_class, client_data_, test_);
}

void FedAvgSimulation::save_checkpoints(const std::filesystem::path& dir) const {
  save_module(dir / "server" / "w_global.eftv", global_.w_global.named());
  save_module(dir / "server" / "phi.eftv", global_.phi.named());
  save_module(dir / "server" / "theta_server.eftv", global_.theta.named());
}

std::vector<double> train_centralized(const ViTConfig& vit, const FLConfig& fl,
                                      const Dataset& train) {
  vit.validate();
  fl.validate();
  ParamSet params = initial_params(vit, fl);
  auto named = all_named(params);
  set_trainable(named, true);
  AdamW optimizer(tensors_of(named), AdamWOptions{.weight_decay = fl.weight_decay});
  std::vector<std::int64_t> indices(static_cast<std::size_t>(train.size()));
  std::iota(indices.begin(), indices.end(), 0);
  std::vector<double> losses;
  for (int round = 0; round < fl.rounds; ++round) {
    auto stats = train_local(params, optimizer, train, indices, 0, round, 0.0, fl.round_lr(round),
                             fl, vit, nullptr);
    losses.push_back(stats.mean_loss());
  }
  return losses;
}

}  // namespace maskfed
