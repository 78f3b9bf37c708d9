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

#include "maskfed/experiment.hpp"

#include <fstream>
#include <memory>

#include "json.hpp"
#include "maskfed/errors.hpp"
#include "maskfed/rng.hpp"

namespace maskfed {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

template <typename Sim>
RunResult drive(Sim& sim, const ExperimentConfig& cfg, const RunOptions& options,
                std::ofstream* metrics, std::ofstream* timing) {
  RunResult result;
  for (int round = 0; round < cfg.fl.rounds; ++round) {
    RoundMetrics m = sim.run_round(round);
    result.total_bytes_up += m.bytes_up;
    result.total_bytes_down += m.bytes_down;
    result.total_client_macs += m.client_macs;
    if (metrics != nullptr) *metrics << m.to_json() << "\n" << std::flush;
    if (timing != nullptr) {
      nlohmann::ordered_json t;
      t["round"] = m.round;
      t["wallclock_s"] = m.wallclock_s;
      *timing << t.dump() << "\n" << std::flush;
    }
    if (options.on_round) options.on_round(m);
    result.rounds.push_back(std::move(m));
  }
  result.final_eval = sim.evaluate();
  return result;
}

}  // namespace

std::pair<Dataset, Dataset> build_datasets(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.kind == "binary") {
    auto train = load_binary_dataset(d.train_path, d.classes);
    auto test = load_binary_dataset(d.test_path, d.classes);
    const auto v = cfg.vit();
    for (const Dataset* ds : {&train, &test}) {
      if (ds->channels() != v.channels || ds->height() != v.image_h || ds->width() != v.image_w) {
        throw ConfigError("dataset.image_size: binary data geometry does not match the config");
      }
    }
    return {std::move(train), std::move(test)};
  }
  ToyDatasetSpec spec;
  spec.classes = d.classes;
  spec.train_per_class = d.train_per_class;
  spec.test_per_class = d.test_per_class;
  spec.image_h = d.image_size;
  spec.image_w = d.image_size;
  spec.channels = d.channels;
  spec.patch = d.patch_size;
  spec.noise = d.noise;
  auto rng = make_stream(cfg.fl.seed, StreamPurpose::kData);
  return make_toy_dataset(spec, rng);
}

std::string RunResult::summary_json() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["rounds"] = rounds.size();
  const bool have = !rounds.empty() && rounds.back().test_acc.has_value();
  j["final_test_acc"] = have ? nlohmann::ordered_json(*rounds.back().test_acc) : nullptr;
  j["final_personalized_acc"] =
      have ? nlohmann::ordered_json(*rounds.back().personalized_acc) : nullptr;
  j["final_mean_client_loss"] = rounds.empty() ? 0.0 : rounds.back().mean_client_loss;
  j["total_bytes_up"] = total_bytes_up;
  j["total_bytes_down"] = total_bytes_down;
  j["total_client_macs"] = total_client_macs;
  j["client_test_acc"] = final_eval.client_plain;
  j["client_personalized_acc"] = final_eval.client_weighted;
  return j.dump(2) + "\n";
}

std::filesystem::path unique_run_dir(const std::filesystem::path& base) {
  namespace fs = std::filesystem;
  fs::path candidate = base;
  for (int i = 1; fs::exists(candidate); ++i) {
    candidate = base.string() + "-" + std::to_string(i);
  }
  fs::create_directories(candidate);
  return candidate;
}

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  auto [train, test] = build_datasets(cfg);
  const auto vit = cfg.vit();

  std::filesystem::path dir;
  std::unique_ptr<std::ofstream> metrics, timing;
  if (options.out_dir) {
    dir = unique_run_dir(*options.out_dir);
    write_text(dir / "config.json", render_config(cfg));
    metrics = std::make_unique<std::ofstream>(dir / "metrics.jsonl", std::ios::binary);
    timing = std::make_unique<std::ofstream>(dir / "timing.jsonl", std::ios::binary);
  }

  RunResult result;
  if (cfg.baseline == "none") {
    EftvitSimulation sim(vit, cfg.fl, train, test, options.threads);
    result = drive(sim, cfg, options, metrics.get(), timing.get());
    result.method = "eftvit";
    if (options.out_dir) sim.save_checkpoints(dir / "checkpoints");
  } else {
    FedAvgSimulation sim(parse_baseline(cfg.baseline), vit, cfg.fl, train, test, options.threads);
    result = drive(sim, cfg, options, metrics.get(), timing.get());
    result.method = cfg.baseline;
    if (options.out_dir) sim.save_checkpoints(dir / "checkpoints");
  }
  result.out_dir = dir;
  if (options.out_dir) write_text(dir / "summary.json", result.summary_json());
  return result;
}

}  // namespace maskfed
